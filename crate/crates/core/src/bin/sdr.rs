use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sdr_core::detect::BoundingBox;
use sdr_core::encoder::{
    load_model, robust_finetune, save_model, EncoderModel, EncoderVariant, RobustTrainConfig, REFERENCE_INPUT_SCALE,
};
use sdr_core::harness::dataset::{coil_maps, make_instance, random_phantom_spec};
use sdr_core::harness::{
    calibrate_lesion_contrast, derive_seed, format_summary, run_experiment, write_dataset, write_plots, write_run_dir,
    Context, DatasetConfig, ExperimentConfig, MetricReport, TimingReport,
};
use sdr_core::io::{read_config, read_json, read_png_magnitude, write_json, write_png_magnitude, DEFAULT_PNG_FULL_SCALE};
use sdr_core::mri::{AcquisitionData, ComplexImage};
use sdr_core::recon::DcConfig;
use sdr_core::sdr::{diversity_matrix, sdr_generate, ReconProvenance, SdrParams};
use sdr_core::Result;

/// Semantically diverse, data-consistent MRI reconstructions.
///
/// Without a subcommand, generates a reconstruction set for one acquisition.
#[derive(Parser)]
#[command(name = "sdr", version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    generate: Option<GenerateArgs>,
}

#[derive(Subcommand)]
enum Command {
    /// Write test phantoms, acquisitions and baseline reconstructions.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Find the lesion contrast that puts baseline recall in the target band.
    Calibrate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the result as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full benchmark and write a run directory.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the summary of a run directory and redraw its plots.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Robust fine-tuning of a trainable encoder on synthetic phantoms.
    TrainEncoder(TrainArgs),
}

#[derive(Args)]
#[group(id = "generate")]
struct GenerateArgs {
    /// Acquisition JSON (k-space, mask, coil maps).
    #[arg(long, required = true)]
    input: PathBuf,
    /// Initial reconstruction: complex image JSON or magnitude PNG.
    #[arg(long, required = true)]
    init: PathBuf,
    /// JSON list of `[x_min, y_min, x_max, y_max]` boxes.
    #[arg(long, required = true)]
    boxes: PathBuf,
    #[arg(long, required = true)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    n_rec: usize,
    #[arg(long, default_value_t = 50)]
    n_opt: usize,
    #[arg(long, default_value_t = 3.0)]
    radius: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    cg_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    cg_tol: f64,
    #[arg(long, default_value_t = 0.1)]
    step_size: f64,
    #[arg(long, default_value_t = 0.005)]
    init_sigma: f64,
    /// Encoder model file; the reference encoder when absent.
    #[arg(long)]
    encoder: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    encoder_seed: u64,
    /// Magnitude mapped to white in PNG input and output.
    #[arg(long, default_value_t = DEFAULT_PNG_FULL_SCALE)]
    png_full_scale: f64,
    /// Also write the complex reconstructions as JSON.
    #[arg(long)]
    save_complex: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Training settings (JSON or TOML); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 40)]
    n_images: usize,
    /// Side of the training phantoms; the convolutional backbone works at any size.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long)]
    outer_steps: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Serialize)]
struct SetSummary<'a> {
    provenance: &'a [ReconProvenance],
    boxes: &'a [BoundingBox],
    radius: f64,
    seeded_mean_distance: f64,
    final_mean_distance: f64,
    distance_trace: &'a [f64],
    diversity_matrix: Vec<Vec<f64>>,
    params: &'a SdrParams,
}

fn load_experiment_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => read_config(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn read_init(path: &Path, full_scale: f64) -> Result<ComplexImage> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
        read_png_magnitude(path, full_scale)
    } else {
        read_json(path)
    }
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let acq: AcquisitionData = read_json(&a.input)?;
    acq.validate()?;
    let x1 = read_init(&a.init, a.png_full_scale)?;
    let boxes: Vec<BoundingBox> = read_json(&a.boxes)?;
    let model = match &a.encoder {
        Some(p) => load_model(p)?,
        None => EncoderModel::reference(a.encoder_seed),
    };
    let params = SdrParams {
        n_rec: a.n_rec,
        n_opt: a.n_opt,
        radius: a.radius,
        seed: a.seed,
        step_size: a.step_size,
        init_sigma: a.init_sigma,
        dc: DcConfig {
            cg_iters: a.cg_iters,
            cg_tol: a.cg_tol,
            ..DcConfig::default()
        },
        ..SdrParams::default()
    };
    let set = sdr_generate(&acq, &x1, &model, &boxes, &params)?;
    std::fs::create_dir_all(&a.out)?;
    for (i, img) in set.images.iter().enumerate() {
        write_png_magnitude(img, a.out.join(format!("recon_{}.png", i + 1)), a.png_full_scale)?;
    }
    if a.save_complex {
        write_json(&set.images, a.out.join("reconstructions.json"))?;
    }
    let summary = SetSummary {
        provenance: &set.provenance,
        boxes: &set.boxes,
        radius: set.radius,
        seeded_mean_distance: set.seeded_mean_distance,
        final_mean_distance: set.final_mean_distance(),
        distance_trace: &set.distance_trace,
        diversity_matrix: diversity_matrix(&set, &model, &boxes)?,
        params: &params,
    };
    write_json(&summary, a.out.join("provenance.json"))?;
    for (i, p) in set.provenance.iter().enumerate() {
        println!(
            "recon {}: distance to initial {:.4}, consistency residual {:.2e}",
            i + 1,
            p.distance_to_initial,
            p.consistency_residual
        );
    }
    println!(
        "mean box-feature distance {:.4} after seeding, {:.4} final",
        set.seeded_mean_distance,
        set.final_mean_distance()
    );
    Ok(())
}

fn train_encoder(a: &TrainArgs) -> Result<()> {
    let mut cfg: RobustTrainConfig = match &a.config {
        Some(p) => read_config(p)?,
        None => RobustTrainConfig::default(),
    };
    if let Some(s) = a.outer_steps {
        cfg.outer_steps = s;
    }
    if let Some(r) = a.radius {
        cfg.perturbation_budget = r;
    }
    cfg.seed = a.seed;
    let data = DatasetConfig {
        size: a.size,
        ..DatasetConfig::default()
    };
    let sens = coil_maps(&data)?;
    let images = (0..a.n_images)
        .map(|i| {
            let seed = derive_seed(a.seed, &[3, i as u64]);
            make_instance(&random_phantom_spec(&data, seed), &data, 1.0, &sens, seed).map(|inst| inst.phantom.image)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut model = EncoderModel::new(8, 7, 64, a.seed, EncoderVariant::Trainable)?;
    model.input_scale = REFERENCE_INPUT_SCALE;
    let (trained, log) = robust_finetune(&model, &images, &cfg)?;
    save_model(&trained, &a.out)?;
    let log_path = a.out.with_extension("log.csv");
    std::fs::write(&log_path, log.to_csv())?;
    if let (Some(first), Some(last)) = (log.entries.first(), log.entries.last()) {
        println!("objective {:.4e} at step {} -> {:.4e} at step {}", first.1, first.0, last.1, last.0);
    }
    println!("wrote {} and {}", a.out.display(), log_path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        None => match cli.generate {
            Some(a) => generate(&a),
            None => unreachable!("clap requires the generate flags without a subcommand"),
        },
        Some(Command::GenData { config, out }) => {
            let cfg = load_experiment_config(config.as_deref())?;
            let m = write_dataset(&cfg, &out)?;
            println!("wrote {} files under {}", m.files.len(), out.display());
            Ok(())
        }
        Some(Command::Calibrate { config, out }) => {
            let cfg = load_experiment_config(config.as_deref())?;
            let ctx = Context::new(cfg.clone())?;
            let c = calibrate_lesion_contrast(&ctx, &cfg.calibration)?;
            println!(
                "contrast {:.5}: baseline recall {:.3} at {}x after {} bisection steps",
                c.contrast, c.recall, c.acceleration, c.steps
            );
            if let Some(p) = out {
                write_json(&c, p)?;
            }
            Ok(())
        }
        Some(Command::Run { config, out }) => {
            let cfg = load_experiment_config(config.as_deref())?;
            let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("sdr-run"));
            let output = run_experiment(&cfg)?;
            write_run_dir(&output, &dir)?;
            print!("{}", format_summary(&output.report, Some(&output.timings)));
            println!("wrote {}", dir.display());
            Ok(())
        }
        Some(Command::Report { run }) => {
            let report: MetricReport = read_json(run.join("report.json"))?;
            let timings: Option<TimingReport> = read_json(run.join("timings.json")).ok();
            write_plots(&report, &run)?;
            print!("{}", format_summary(&report, timings.as_ref()));
            Ok(())
        }
        Some(Command::TrainEncoder(a)) => train_encoder(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

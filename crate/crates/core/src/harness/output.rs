//! Run directory layout: report, timings, detections, plots and a manifest.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{derive_seed, random_phantom_spec};
use super::experiment::{phantom_seed, Context, ExperimentConfig, ExperimentOutput, Method, MetricReport, TimingReport};
use super::plot::{line_plot_png, line_plot_svg, Series};
use crate::detect::{jitter_boxes, BoundingBox, DetectionRecord};
use crate::error::Result;
use crate::io::{write_json, write_png_magnitude, DEFAULT_PNG_FULL_SCALE};

pub const REPORT_FILE: &str = "report.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub master_seed: u64,
    pub files: Vec<String>,
}

/// Raw per-image detection with its instance coordinates.
#[derive(Serialize)]
struct RunDetection<'a> {
    phantom: usize,
    acceleration: f64,
    method: Method,
    #[serde(flatten)]
    record: &'a DetectionRecord,
}

fn series_for(report: &MetricReport, metric: impl Fn(&super::experiment::MethodSummary) -> Option<f64>) -> Vec<Series> {
    report
        .config
        .methods
        .iter()
        .map(|&m| Series {
            name: m.name().to_string(),
            points: report
                .config
                .accelerations
                .iter()
                .filter_map(|&a| report.summary_for(a, m).and_then(&metric).map(|v| (a, v)))
                .collect(),
        })
        .collect()
}

/// Writes the recall and mAP charts; returns the file names.
pub fn write_plots(report: &MetricReport, dir: &Path) -> Result<Vec<String>> {
    let mut files = Vec::new();
    for (stem, label, series) in [
        ("recall_vs_acceleration", "recall", series_for(report, |s| s.recall)),
        ("map_vs_acceleration", "mAP@0.25", series_for(report, |s| s.map)),
    ] {
        std::fs::write(dir.join(format!("{stem}.png")), line_plot_png(&series, 480, 320)?)?;
        let svg = line_plot_svg(&format!("{label} vs acceleration"), "acceleration", label, &series, 480, 320);
        std::fs::write(dir.join(format!("{stem}.svg")), svg)?;
        files.push(format!("{stem}.png"));
        files.push(format!("{stem}.svg"));
    }
    Ok(files)
}

pub fn write_run_dir(out: &ExperimentOutput, dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    write_json(&out.report, dir.join(REPORT_FILE))?;
    write_json(&out.timings, dir.join(TIMINGS_FILE))?;
    write_detections(&out.report, dir)?;
    let mut files = vec![
        REPORT_FILE.to_string(),
        TIMINGS_FILE.to_string(),
        DETECTIONS_FILE.to_string(),
    ];
    files.extend(write_plots(&out.report, dir)?);
    write_json(&out.report.config, dir.join("config.json"))?;
    files.push("config.json".into());
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: out.report.master_seed,
        files,
    };
    write_json(&manifest, dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Directory name of one acceleration inside a phantom directory.
pub fn accel_dir_name(acceleration: f64) -> String {
    format!("accel_{acceleration}")
}

/// Writes the test phantoms of `cfg` with their acquisitions and baseline
/// reconstructions:
///
/// ```text
/// phantom_000/spec.json, ground_truth.json, boxes.json, phantom.png
/// phantom_000/accel_4/acq.json, init.json, init.png
/// ```
///
/// `boxes.json` holds jittered ground-truth boxes, a stand-in for boxes drawn
/// by a reader.
pub fn write_dataset(cfg: &ExperimentConfig, dir: &Path) -> Result<Manifest> {
    let ctx = Context::new(cfg.clone())?;
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let put = |rel: String, files: &mut Vec<String>| -> std::path::PathBuf {
        files.push(rel.clone());
        dir.join(rel)
    };
    for p in 0..cfg.n_phantoms {
        let seed = phantom_seed(cfg.master_seed, p);
        let spec = random_phantom_spec(&ctx.cfg.dataset, seed);
        let pdir = format!("phantom_{p:03}");
        std::fs::create_dir_all(dir.join(&pdir))?;
        write_json(&spec, put(format!("{pdir}/spec.json"), &mut files))?;
        for (k, &a) in cfg.accelerations.iter().enumerate() {
            let inst = ctx.instance(&spec, a, seed)?;
            if k == 0 {
                let gt = &inst.phantom.ground_truth;
                let boxes: Vec<BoundingBox> = gt.iter().map(|g| g.bbox).collect();
                let (w, h) = (inst.phantom.image.width(), inst.phantom.image.height());
                write_json(gt, put(format!("{pdir}/ground_truth.json"), &mut files))?;
                write_json(&jitter_boxes(&boxes, derive_seed(seed, &[7]), w, h), put(format!("{pdir}/boxes.json"), &mut files))?;
                write_png_magnitude(&inst.phantom.image, put(format!("{pdir}/phantom.png"), &mut files), DEFAULT_PNG_FULL_SCALE)?;
            }
            let adir = format!("{pdir}/{}", accel_dir_name(a));
            std::fs::create_dir_all(dir.join(&adir))?;
            let x1 = ctx.baseline(&inst)?;
            write_json(&inst.acq, put(format!("{adir}/acq.json"), &mut files))?;
            write_json(&x1, put(format!("{adir}/init.json"), &mut files))?;
            write_png_magnitude(&x1, put(format!("{adir}/init.png"), &mut files), DEFAULT_PNG_FULL_SCALE)?;
        }
    }
    write_json(cfg, put("config.json".into(), &mut files))?;
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: cfg.master_seed,
        files,
    };
    write_json(&manifest, dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn write_detections(report: &MetricReport, dir: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(DETECTIONS_FILE))?);
    for inst in &report.instances {
        for (source, dets) in inst.per_image_detections.iter().enumerate() {
            for d in dets {
                let record = DetectionRecord::new(d, source);
                serde_json::to_writer(
                    &mut f,
                    &RunDetection {
                        phantom: inst.phantom,
                        acceleration: inst.acceleration,
                        method: inst.method,
                        record: &record,
                    },
                )?;
                f.write_all(b"\n")?;
            }
        }
    }
    f.flush()?;
    Ok(())
}

/// Plain-text table of the summary.
pub fn format_summary(report: &MetricReport, timings: Option<&TimingReport>) -> String {
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
    let mut s = format!(
        "lesion contrast {:.4}\n{:>6} {:<15} {:>7} {:>7} {:>10} {:>9} {:>6} {:>8}\n",
        report.lesion_contrast, "accel", "method", "recall", "mAP", "residual", "diversity", "fails", "s/image"
    );
    for m in &report.summary {
        let secs = timings.and_then(|t| {
            t.per_image_seconds
                .iter()
                .find(|(a, mm, _)| *mm == m.method && (a - m.acceleration).abs() < 1e-9)
                .map(|e| e.2)
        });
        s.push_str(&format!(
            "{:>6} {:<15} {:>7} {:>7} {:>10.2e} {:>9} {:>6} {:>8}\n",
            m.acceleration,
            m.method.name(),
            fmt(m.recall),
            fmt(m.map),
            m.mean_consistency_residual,
            fmt(m.mean_diversity),
            m.n_failures,
            fmt(secs),
        ));
    }
    s
}

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;

use sdr_core::encoder::{load_model, EncoderModel};
use sdr_core::harness::ExperimentConfig;
use sdr_service::{router, AppState, Dataset, ServiceConfig};

/// Serves slices and runs SDR on user-drawn boxes.
#[derive(Parser)]
#[command(name = "sdr-service", version)]
struct Cli {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Directory written by `sdr gen-data`; a small synthetic set when absent.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Expose ground-truth boxes.
    #[arg(long)]
    demo_mode: bool,
    /// Encoder model file; the reference encoder when absent.
    #[arg(long)]
    encoder: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    max_jobs: usize,
    #[arg(long, default_value_t = 30.0)]
    budget_secs: f64,
    /// Origin allowed by CORS; any origin when absent.
    #[arg(long)]
    cors_origin: Option<String>,
    /// Phantoms in the synthetic set.
    #[arg(long, default_value_t = 4)]
    demo_phantoms: usize,
}

fn build_state(cli: &Cli) -> sdr_core::Result<AppState> {
    let dataset = match &cli.data_dir {
        Some(dir) => Dataset::load(dir)?,
        None => Dataset::synthetic(&ExperimentConfig {
            n_phantoms: cli.demo_phantoms,
            accelerations: vec![4.0, 8.0],
            ..ExperimentConfig::default()
        })?,
    };
    let model = match &cli.encoder {
        Some(p) => load_model(p)?,
        None => EncoderModel::reference(0),
    };
    let cfg = ServiceConfig {
        demo_mode: cli.demo_mode,
        max_jobs: cli.max_jobs.max(1),
        budget: Duration::from_secs_f64(cli.budget_secs.max(0.0)),
        cors_origin: cli.cors_origin.clone(),
        ..ServiceConfig::default()
    };
    AppState::new(dataset, model, cfg)
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    let state = match build_state(&cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    eprintln!("{} slices loaded", state.dataset.len());
    let addr = SocketAddr::from(([0, 0, 0, 0], cli.port));
    let listener = match tokio::net::TcpListener::bind(addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: cannot bind {addr}: {e}");
            return ExitCode::FAILURE;
        }
    };
    eprintln!("listening on http://{addr}");
    if let Err(e) = axum::serve(listener, router(state)).await {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}

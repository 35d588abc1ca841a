//! End-to-end experiments: synthetic data, lesion-contrast calibration,
//! baseline and diverse-reconstruction methods, metric reports and plots.

pub mod dataset;
pub mod experiment;
pub mod output;
pub mod plot;

pub use dataset::{derive_seed, lesion_templates, random_phantom_spec, DatasetConfig, LESION_CLASSES};
pub use experiment::{
    baseline_recall, calibrate_lesion_contrast, evaluate_method, phantom_seed, run_experiment, summarize, BaselineConfig,
    CalibrationConfig, CalibrationResult, Context, EncoderChoice, ExperimentConfig, ExperimentOutput, InstanceRecord,
    Method, MethodSummary, MetricReport, TimingReport,
};
pub use output::{accel_dir_name, format_summary, write_dataset, write_plots, write_run_dir, Manifest};

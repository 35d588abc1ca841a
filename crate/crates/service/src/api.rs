//! Wire types.

use serde::{Deserialize, Serialize};

use sdr_core::detect::{Detection, MergedDetection};
use sdr_core::mri::GroundTruth;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceSummary {
    pub slice_id: String,
    pub acceleration: f64,
    /// Base64 PNG of the downsampled initial magnitude.
    pub thumbnail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceDetail {
    pub slice_id: String,
    pub phantom: usize,
    pub acceleration: f64,
    pub width: usize,
    pub height: usize,
    pub n_coils: usize,
    pub sampled_columns: usize,
    /// Magnitude that maps to white in every PNG served.
    pub png_full_scale: f64,
    /// Base64 16-bit grayscale PNG of the initial reconstruction.
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<GroundTruth>>,
}

fn default_n_rec() -> usize {
    3
}

fn default_n_opt() -> usize {
    50
}

fn default_radius() -> f64 {
    3.0
}

/// Boxes stay raw so that every bad one can be reported.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdrJobRequest {
    pub slice_id: String,
    pub boxes: Vec<[f64; 4]>,
    #[serde(default = "default_n_rec")]
    pub n_rec: usize,
    #[serde(default = "default_n_opt")]
    pub n_opt: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconOutput {
    /// Base64 16-bit grayscale PNG.
    pub image: String,
    pub consistency_residual: f64,
    pub distance_to_initial: f64,
    /// Noise seed; absent for the anchor reconstruction.
    pub seed: Option<u64>,
    pub detections: Vec<Detection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub sdr_ms: f64,
    pub detect_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdrJobResult {
    pub slice_id: String,
    pub radius: f64,
    pub reconstructions: Vec<ReconOutput>,
    pub diversity_matrix: Vec<Vec<f64>>,
    pub seeded_mean_distance: f64,
    pub final_mean_distance: f64,
    pub merged_detections: Vec<MergedDetection>,
    pub timing: Timing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvalidBox {
    pub index: usize,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub invalid_boxes: Vec<InvalidBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completed_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_iterations: Option<usize>,
}

//! Browser bindings for a small SDR session: simulate a slice, draw a box,
//! generate diverse reconstructions and run the detector on each.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use sdr_core::detect::{merge_detections, BoundingBox, MergedDetection};
use sdr_core::harness::{derive_seed, random_phantom_spec, Context, DatasetConfig, ExperimentConfig};
use sdr_core::mri::{AcquisitionData, ComplexImage, GroundTruth};
use sdr_core::sdr::{diversity_matrix, sdr_generate, ReconstructionSet, SdrParams};
use sdr_core::Result;

/// Side of the simulated slice.
pub const SIZE: usize = 64;

/// Magnitude drawn as white.
const FULL_SCALE: f64 = 64.0;

/// Grayscale RGBA bytes ready for `ImageData`.
pub fn to_rgba(x: &ComplexImage, full_scale: f64) -> Vec<u8> {
    x.data()
        .iter()
        .flat_map(|z| {
            let v = ((z.norm() / full_scale).clamp(0.0, 1.0) * 255.0).round() as u8;
            [v, v, v, 255]
        })
        .collect()
}

/// `|a − b|` scaled so that `max_abs` is white.
pub fn difference_rgba(a: &ComplexImage, b: &ComplexImage, max_abs: f64) -> Vec<u8> {
    let d = a.sub(b);
    to_rgba(&d, max_abs.max(f64::MIN_POSITIVE))
}

#[derive(Serialize)]
pub struct RunSummary {
    pub consistency_residuals: Vec<f64>,
    pub distances_to_initial: Vec<f64>,
    pub diversity_matrix: Vec<Vec<f64>>,
    pub seeded_mean_distance: f64,
    pub final_mean_distance: f64,
    pub merged_detections: Vec<MergedDetection>,
    /// Largest per-pixel deviation from the first reconstruction.
    pub max_deviation: f64,
}

/// One simulated slice and the last reconstruction set.
#[wasm_bindgen]
pub struct Demo {
    ctx: Context,
    acq: AcquisitionData,
    phantom: ComplexImage,
    initial: ComplexImage,
    ground_truth: Vec<GroundTruth>,
    last: Option<ReconstructionSet>,
}

impl Demo {
    pub fn create(seed: u64, acceleration: f64) -> Result<Demo> {
        let cfg = ExperimentConfig {
            n_phantoms: 1,
            accelerations: vec![acceleration],
            dataset: DatasetConfig {
                size: SIZE,
                ..DatasetConfig::default()
            },
            ..ExperimentConfig::default()
        };
        let ctx = Context::new(cfg)?;
        let spec = random_phantom_spec(&ctx.cfg.dataset, derive_seed(seed, &[0]));
        let inst = ctx.instance(&spec, acceleration, seed)?;
        let initial = ctx.baseline(&inst)?;
        Ok(Demo {
            ctx,
            acq: inst.acq,
            phantom: inst.phantom.image,
            initial,
            ground_truth: inst.phantom.ground_truth,
            last: None,
        })
    }

    pub fn generate(&mut self, b: BoundingBox, n_rec: usize, n_opt: usize, radius: f64, seed: u64) -> Result<RunSummary> {
        let params = SdrParams {
            n_rec,
            n_opt,
            radius,
            seed,
            ..SdrParams::default()
        };
        let boxes = [b];
        let set = sdr_generate(&self.acq, &self.initial, &self.ctx.model, &boxes, &params)?;
        let per_recon = set.images.iter().map(|x| self.ctx.detect(x)).collect::<Result<Vec<_>>>()?;
        let max_deviation = set.images[1..]
            .iter()
            .flat_map(|x| x.sub(&set.images[0]).magnitude())
            .fold(0.0, f64::max);
        let summary = RunSummary {
            consistency_residuals: set.provenance.iter().map(|p| p.consistency_residual).collect(),
            distances_to_initial: set.provenance.iter().map(|p| p.distance_to_initial).collect(),
            diversity_matrix: diversity_matrix(&set, &self.ctx.model, &boxes)?,
            seeded_mean_distance: set.seeded_mean_distance,
            final_mean_distance: set.final_mean_distance(),
            merged_detections: merge_detections(&per_recon, set.images.len())?,
            max_deviation,
        };
        self.last = Some(set);
        Ok(summary)
    }

    pub fn ground_truth(&self) -> &[GroundTruth] {
        &self.ground_truth
    }

    pub fn reconstruction(&self, i: usize) -> Option<&ComplexImage> {
        self.last.as_ref()?.images.get(i)
    }
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
impl Demo {
    /// Simulates a phantom, its undersampled acquisition and the CG-SENSE
    /// initial reconstruction.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, acceleration: f64) -> std::result::Result<Demo, JsError> {
        Demo::create(seed as u64, acceleration).map_err(js_err)
    }

    pub fn size(&self) -> usize {
        SIZE
    }

    pub fn phantom_rgba(&self) -> Vec<u8> {
        to_rgba(&self.phantom, FULL_SCALE)
    }

    pub fn initial_rgba(&self) -> Vec<u8> {
        to_rgba(&self.initial, FULL_SCALE)
    }

    /// Ground-truth lesions as JSON `[{box, class_id}]`.
    pub fn ground_truth_json(&self) -> String {
        serde_json::to_string(&self.ground_truth).unwrap_or_else(|_| "[]".into())
    }

    /// Runs SDR for one box and returns a JSON [`RunSummary`].
    #[allow(clippy::too_many_arguments)]
    pub fn run(
        &mut self,
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
        n_rec: usize,
        n_opt: usize,
        radius: f64,
        seed: u32,
    ) -> std::result::Result<String, JsError> {
        let b = BoundingBox::new(x_min, y_min, x_max, y_max).map_err(js_err)?;
        if !b.within(SIZE, SIZE) {
            return Err(JsError::new("box lies outside the image"));
        }
        let s = self.generate(b, n_rec, n_opt, radius, seed as u64).map_err(js_err)?;
        serde_json::to_string(&s).map_err(js_err)
    }

    /// Reconstruction `i` of the last run; empty when out of range.
    pub fn reconstruction_rgba(&self, i: usize) -> Vec<u8> {
        self.reconstruction(i).map(|x| to_rgba(x, FULL_SCALE)).unwrap_or_default()
    }

    /// `|x_i − x_1|` of the last run with `max_abs` drawn as white.
    pub fn difference_rgba(&self, i: usize, max_abs: f64) -> Vec<u8> {
        match (self.reconstruction(0), self.reconstruction(i)) {
            (Some(a), Some(b)) => difference_rgba(b, a, max_abs),
            _ => Vec::new(),
        }
    }
}

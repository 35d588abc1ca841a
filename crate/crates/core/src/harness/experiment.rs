use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{coil_maps, derive_seed, lesion_templates, make_instance, random_phantom_spec, DatasetConfig, Instance};
use crate::detect::{
    jitter_boxes, map_at_iou, match_counts, matched_filter_detect, merge_detections, propose_boxes_auto, BoundingBox,
    Detection, DetectorTemplate, MergedDetection, ProposalConfig, MATCH_IOU,
};
use crate::encoder::{load_model, EncoderModel};
use crate::error::{invalid, Result, SdrError};
use crate::mri::{ComplexImage, CoilSensitivities, GroundTruth, PhantomSpec};
use crate::recon::{cg_least_squares, consistency_residual, zero_filled_recon, DcConfig};
use crate::sdr::{sdr_generate, SdrParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    /// One CG-SENSE reconstruction.
    #[serde(rename = "baseline-1")]
    Baseline1,
    /// Three CG-SENSE reconstructions from perturbed starting points.
    #[serde(rename = "baseline-3seed")]
    Baseline3Seed,
    /// Diverse reconstructions around jittered ground-truth boxes.
    #[serde(rename = "sdr-m")]
    SdrM,
    /// Diverse reconstructions around automatic proposals.
    #[serde(rename = "sdr-a")]
    SdrA,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Baseline1, Method::Baseline3Seed, Method::SdrM, Method::SdrA];

    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline1 => "baseline-1",
            Method::Baseline3Seed => "baseline-3seed",
            Method::SdrM => "sdr-m",
            Method::SdrA => "sdr-a",
        }
    }

    fn tag(self) -> u64 {
        self as u64 + 100
    }
}

impl std::str::FromStr for Method {
    type Err = SdrError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| invalid(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// CG settings of the initial reconstruction.
    pub cg: DcConfig,
    /// Standard deviation of the starting-point perturbation for baseline-3seed.
    pub seed_sigma: f64,
    pub n_seeds: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            cg: DcConfig {
                cg_iters: 30,
                cg_tol: 1e-6,
                replacement: false,
            },
            seed_sigma: 0.5,
            n_seeds: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EncoderChoice {
    /// Fixed random encoder; needs no training.
    Reference { seed: u64 },
    /// Model file written by `save_model`, e.g. a robustly fine-tuned one.
    File { path: PathBuf },
}

impl Default for EncoderChoice {
    fn default() -> Self {
        EncoderChoice::Reference { seed: 0 }
    }
}

impl EncoderChoice {
    pub fn load(&self) -> Result<EncoderModel> {
        match self {
            EncoderChoice::Reference { seed } => Ok(EncoderModel::reference(*seed)),
            EncoderChoice::File { path } => load_model(path),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub acceleration: f64,
    /// Target interval for the baseline single-reconstruction recall.
    pub band: [f64; 2],
    pub n_phantoms: usize,
    pub contrast_bounds: [f64; 2],
    pub max_steps: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            acceleration: 8.0,
            band: [0.3, 0.7],
            n_phantoms: 12,
            contrast_bounds: [0.02, 1.0],
            max_steps: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n_phantoms: usize,
    pub accelerations: Vec<f64>,
    pub methods: Vec<Method>,
    pub dataset: DatasetConfig,
    pub sdr: SdrParams,
    pub baseline: BaselineConfig,
    pub detector_threshold: f64,
    pub proposals: ProposalConfig,
    /// Calibrate the lesion contrast before the run (otherwise the dataset
    /// contrast is used as is).
    pub calibrate: bool,
    pub calibration: CalibrationConfig,
    pub encoder: EncoderChoice,
    pub master_seed: u64,
    /// Where reports and plots go; nothing is written when unset.
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_phantoms: 20,
            accelerations: vec![4.0, 8.0, 12.0],
            methods: Method::ALL.to_vec(),
            dataset: DatasetConfig::default(),
            sdr: SdrParams::default(),
            baseline: BaselineConfig::default(),
            detector_threshold: 0.6,
            proposals: ProposalConfig::default(),
            calibrate: true,
            calibration: CalibrationConfig::default(),
            encoder: EncoderChoice::default(),
            master_seed: 0,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_phantoms == 0 {
            return Err(invalid("n_phantoms must be at least 1"));
        }
        if self.accelerations.is_empty() || self.accelerations.iter().any(|&a| !(a >= 1.0)) {
            return Err(invalid("accelerations must be nonempty and ≥ 1"));
        }
        if self.methods.is_empty() {
            return Err(invalid("no methods selected"));
        }
        if !(0.0..=1.0).contains(&self.detector_threshold) {
            return Err(invalid("detector_threshold must lie in [0, 1]"));
        }
        let d = &self.dataset;
        if d.size < 16 || d.n_coils == 0 || !(d.intensity_scale > 0.0) || !(d.noise_sigma >= 0.0) || !(d.mean_lesions >= 0.0) {
            return Err(invalid("dataset needs size ≥ 16, ≥ 1 coil, positive intensity scale and nonnegative noise"));
        }
        self.sdr.validate()?;
        self.baseline.cg.validate()
    }
}

const TAG_TEST: u64 = 1;
const TAG_CALIBRATION: u64 = 2;

/// Seed of test phantom `p`.
pub fn phantom_seed(master: u64, p: usize) -> u64 {
    derive_seed(master, &[TAG_TEST, p as u64])
}

/// Seed of calibration phantom `p`.
pub fn calibration_phantom_seed(master: u64, p: usize) -> u64 {
    derive_seed(master, &[TAG_CALIBRATION, p as u64])
}

fn accel_tag(a: f64) -> u64 {
    (a * 1000.0).round() as u64
}

/// Shared state of a run.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub sens: CoilSensitivities,
    pub model: EncoderModel,
    pub templates: Vec<DetectorTemplate>,
}

impl Context {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            sens: coil_maps(&cfg.dataset)?,
            model: cfg.encoder.load()?,
            templates: lesion_templates(),
            cfg,
        })
    }

    pub fn instance(&self, spec: &PhantomSpec, acceleration: f64, seed: u64) -> Result<Instance> {
        make_instance(spec, &self.cfg.dataset, acceleration, &self.sens, derive_seed(seed, &[accel_tag(acceleration)]))
    }

    /// CG-SENSE initial reconstruction from the zero-filled image.
    pub fn baseline(&self, inst: &Instance) -> Result<ComplexImage> {
        cg_least_squares(&inst.acq, &zero_filled_recon(&inst.acq), &self.cfg.baseline.cg)
    }

    pub fn detect(&self, x: &ComplexImage) -> Result<Vec<Detection>> {
        matched_filter_detect(x, &self.templates, self.cfg.detector_threshold)
    }
}

/// Per-image result of one method on one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub phantom: usize,
    pub acceleration: f64,
    pub method: Method,
    pub n_ground_truth: usize,
    pub matched: usize,
    pub recall: Option<f64>,
    pub n_images: usize,
    pub n_boxes: usize,
    pub max_consistency_residual: f64,
    pub mean_consistency_residual: f64,
    /// Largest `‖x_i − x1‖₂` (diverse methods only).
    pub max_distance_to_initial: Option<f64>,
    pub seeded_mean_distance: Option<f64>,
    pub final_mean_distance: Option<f64>,
    pub ground_truth: Vec<GroundTruth>,
    pub detections: Vec<MergedDetection>,
    /// Raw per-image detections, indexed by reconstruction.
    pub per_image_detections: Vec<Vec<Detection>>,
    pub failure: Option<String>,
}

struct MethodOutput {
    images: Vec<ComplexImage>,
    boxes: Vec<BoundingBox>,
    max_distance: Option<f64>,
    seeded: Option<f64>,
    final_: Option<f64>,
}

fn perturbed(x: &ComplexImage, sigma: f64, seed: u64) -> ComplexImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(0.0, sigma).expect("finite sigma");
    let data = x
        .data()
        .iter()
        .map(|z| z + Complex64::new(d.sample(&mut rng), d.sample(&mut rng)))
        .collect();
    ComplexImage::from_vec(x.width(), x.height(), data).expect("finite perturbation")
}

fn run_method(ctx: &Context, inst: &Instance, x1: &ComplexImage, method: Method, seed: u64) -> Result<MethodOutput> {
    let (w, h) = (x1.width(), x1.height());
    let plain = |images: Vec<ComplexImage>| MethodOutput {
        images,
        boxes: vec![],
        max_distance: None,
        seeded: None,
        final_: None,
    };
    let boxes = match method {
        Method::Baseline1 => return Ok(plain(vec![x1.clone()])),
        Method::Baseline3Seed => {
            let zf = zero_filled_recon(&inst.acq);
            let b = &ctx.cfg.baseline;
            let images = (0..b.n_seeds)
                .map(|k| cg_least_squares(&inst.acq, &perturbed(&zf, b.seed_sigma, derive_seed(seed, &[k as u64])), &b.cg))
                .collect::<Result<Vec<_>>>()?;
            return Ok(plain(images));
        }
        Method::SdrM => {
            let gt: Vec<BoundingBox> = inst.phantom.ground_truth.iter().map(|g| g.bbox).collect();
            jitter_boxes(&gt, derive_seed(seed, &[0]), w, h)
        }
        Method::SdrA => propose_boxes_auto(x1, &ctx.cfg.proposals),
    };
    if boxes.is_empty() {
        // Nothing to diversify: the set is the initial reconstruction alone.
        return Ok(plain(vec![x1.clone()]));
    }
    let params = SdrParams {
        seed: derive_seed(seed, &[1]),
        ..ctx.cfg.sdr.clone()
    };
    let set = sdr_generate(&inst.acq, x1, &ctx.model, &boxes, &params)?;
    Ok(MethodOutput {
        max_distance: set.provenance.iter().map(|p| p.distance_to_initial).reduce(f64::max),
        seeded: Some(set.seeded_mean_distance),
        final_: Some(set.final_mean_distance()),
        images: set.images,
        boxes,
    })
}

/// Runs `method` on one instance and scores it against ground truth.
pub fn evaluate_method(
    ctx: &Context,
    phantom: usize,
    inst: &Instance,
    x1: &ComplexImage,
    method: Method,
    seed: u64,
) -> InstanceRecord {
    let gts = inst.phantom.ground_truth.clone();
    let mut rec = InstanceRecord {
        phantom,
        acceleration: inst.acq.mask.acceleration,
        method,
        n_ground_truth: gts.len(),
        matched: 0,
        recall: None,
        n_images: 0,
        n_boxes: 0,
        max_consistency_residual: 0.0,
        mean_consistency_residual: 0.0,
        max_distance_to_initial: None,
        seeded_mean_distance: None,
        final_mean_distance: None,
        ground_truth: gts,
        detections: vec![],
        per_image_detections: vec![],
        failure: None,
    };
    let result = (|| -> Result<()> {
        let out = run_method(ctx, inst, x1, method, seed)?;
        let residuals = out
            .images
            .iter()
            .map(|x| consistency_residual(x, &inst.acq))
            .collect::<Result<Vec<_>>>()?;
        let per_image = out.images.iter().map(|x| ctx.detect(x)).collect::<Result<Vec<_>>>()?;
        let merged = merge_detections(&per_image, per_image.len())?;
        let dets: Vec<Detection> = merged.iter().map(|m| m.to_detection()).collect();
        let (m, _) = match_counts(&dets, &rec.ground_truth, MATCH_IOU);
        rec.matched = m;
        rec.recall = (rec.n_ground_truth > 0).then(|| m as f64 / rec.n_ground_truth as f64);
        rec.n_images = out.images.len();
        rec.n_boxes = out.boxes.len();
        rec.max_consistency_residual = residuals.iter().copied().fold(0.0, f64::max);
        rec.mean_consistency_residual = residuals.iter().sum::<f64>() / residuals.len() as f64;
        rec.max_distance_to_initial = out.max_distance;
        rec.seeded_mean_distance = out.seeded;
        rec.final_mean_distance = out.final_;
        rec.detections = merged;
        rec.per_image_detections = per_image;
        Ok(())
    })();
    if let Err(e) = result {
        rec.failure = Some(e.to_string());
    }
    rec
}

/// Aggregates for one acceleration and method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub acceleration: f64,
    pub method: Method,
    /// Mean per-image recall over images with ground truth.
    pub recall: Option<f64>,
    /// mAP at IoU 0.25 over all images, using merged detections.
    pub map: Option<f64>,
    pub mean_consistency_residual: f64,
    pub max_consistency_residual: f64,
    /// Mean final pairwise feature distance (diverse methods only).
    pub mean_diversity: Option<f64>,
    pub max_distance_to_initial: Option<f64>,
    pub n_instances: usize,
    pub n_failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub acceleration: f64,
    pub contrast: f64,
    pub recall: f64,
    pub steps: usize,
    /// `(contrast, recall)` for every evaluation, in order.
    pub history: Vec<(f64, f64)>,
}

/// Everything needed to judge a run. Contains no wall-clock values, so two
/// runs with the same configuration serialize identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub master_seed: u64,
    pub lesion_contrast: f64,
    pub calibration: Option<CalibrationResult>,
    pub config: ExperimentConfig,
    pub summary: Vec<MethodSummary>,
    pub instances: Vec<InstanceRecord>,
}

impl MetricReport {
    pub fn summary_for(&self, acceleration: f64, method: Method) -> Option<&MethodSummary> {
        self.summary
            .iter()
            .find(|s| s.method == method && accel_tag(s.acceleration) == accel_tag(acceleration))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    /// `(acceleration, method, seconds per image)`.
    pub per_image_seconds: Vec<(f64, Method, f64)>,
    pub calibration_seconds: f64,
    pub total_seconds: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub fn summarize(instances: &[InstanceRecord], accelerations: &[f64], methods: &[Method]) -> Result<Vec<MethodSummary>> {
    let mut out = Vec::new();
    for &a in accelerations {
        for &m in methods {
            let recs: Vec<&InstanceRecord> = instances
                .iter()
                .filter(|r| r.method == m && accel_tag(r.acceleration) == accel_tag(a))
                .collect();
            let ok: Vec<&&InstanceRecord> = recs.iter().filter(|r| r.failure.is_none()).collect();
            let dets: Vec<Vec<Detection>> = ok.iter().map(|r| r.detections.iter().map(|d| d.to_detection()).collect()).collect();
            let gts: Vec<Vec<GroundTruth>> = ok.iter().map(|r| r.ground_truth.clone()).collect();
            out.push(MethodSummary {
                acceleration: a,
                method: m,
                recall: mean(ok.iter().filter_map(|r| r.recall)),
                map: map_at_iou(&dets, &gts, MATCH_IOU)?,
                mean_consistency_residual: mean(ok.iter().map(|r| r.mean_consistency_residual)).unwrap_or(0.0),
                max_consistency_residual: ok.iter().map(|r| r.max_consistency_residual).fold(0.0, f64::max),
                mean_diversity: mean(ok.iter().filter_map(|r| r.final_mean_distance)),
                max_distance_to_initial: ok.iter().filter_map(|r| r.max_distance_to_initial).reduce(f64::max),
                n_instances: recs.len(),
                n_failures: recs.len() - ok.len(),
            });
        }
    }
    Ok(out)
}

/// Mean per-image baseline recall over the calibration phantoms at `contrast`.
pub fn baseline_recall(ctx: &Context, contrast: f64, cal: &CalibrationConfig) -> Result<f64> {
    let mut ds = ctx.cfg.dataset.clone();
    ds.lesion_contrast = contrast;
    let mut recalls = Vec::new();
    for p in 0..cal.n_phantoms {
        let seed = calibration_phantom_seed(ctx.cfg.master_seed, p);
        let spec = random_phantom_spec(&ds, seed);
        if spec.lesions.is_empty() {
            continue;
        }
        let inst = make_instance(&spec, &ds, cal.acceleration, &ctx.sens, derive_seed(seed, &[accel_tag(cal.acceleration)]))?;
        let x1 = ctx.baseline(&inst)?;
        let dets = ctx.detect(&x1)?;
        let (m, n) = match_counts(&dets, &inst.phantom.ground_truth, MATCH_IOU);
        recalls.push(m as f64 / n as f64);
    }
    mean(recalls.into_iter()).ok_or_else(|| SdrError::CalibrationFailure("calibration set has no lesions".into()))
}

/// Bisection on lesion contrast until the baseline recall at the calibration
/// acceleration falls inside the band.
pub fn calibrate_lesion_contrast(ctx: &Context, cal: &CalibrationConfig) -> Result<CalibrationResult> {
    let [band_lo, band_hi] = cal.band;
    if !(0.0 < band_lo && band_lo <= band_hi && band_hi < 1.0) {
        return Err(invalid("calibration band must lie inside (0, 1)"));
    }
    let [mut lo, mut hi] = cal.contrast_bounds;
    if !(lo < hi) {
        return Err(invalid("contrast bounds must be increasing"));
    }
    let mut history = Vec::new();
    let eval = |c: f64, history: &mut Vec<(f64, f64)>| -> Result<f64> {
        let r = baseline_recall(ctx, c, cal)?;
        history.push((c, r));
        Ok(r)
    };
    let in_band = |r: f64| (band_lo..=band_hi).contains(&r);
    let r_lo = eval(lo, &mut history)?;
    let r_hi = eval(hi, &mut history)?;
    let done = |contrast, recall, steps, history| CalibrationResult {
        acceleration: cal.acceleration,
        contrast,
        recall,
        steps,
        history,
    };
    if r_lo > band_hi || r_hi < band_lo {
        return Err(SdrError::CalibrationFailure(format!(
            "band unreachable at {}x: recall {r_lo:.3} at contrast {lo} and {r_hi:.3} at contrast {hi}, band [{band_lo}, {band_hi}]",
            cal.acceleration
        )));
    }
    if in_band(r_lo) {
        return Ok(done(lo, r_lo, 0, history));
    }
    if in_band(r_hi) {
        return Ok(done(hi, r_hi, 0, history));
    }
    for step in 1..=cal.max_steps {
        let mid = 0.5 * (lo + hi);
        let r = eval(mid, &mut history)?;
        if in_band(r) {
            return Ok(done(mid, r, step, history));
        }
        if r > band_hi {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(SdrError::CalibrationFailure(format!(
        "no contrast in [{lo}, {hi}] reached the band within {} steps",
        cal.max_steps
    )))
}

/// Result of [`run_experiment`].
pub struct ExperimentOutput {
    pub report: MetricReport,
    pub timings: TimingReport,
}

/// Runs every method on every phantom and acceleration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let start = Instant::now();
    let mut ctx = Context::new(cfg.clone())?;
    let calibration = if cfg.calibrate {
        let c = calibrate_lesion_contrast(&ctx, &cfg.calibration)?;
        ctx.cfg.dataset.lesion_contrast = c.contrast;
        Some(c)
    } else {
        None
    };
    let calibration_seconds = start.elapsed().as_secs_f64();

    let mut instances = Vec::new();
    let mut seconds: BTreeMap<(u64, Method), (f64, usize)> = BTreeMap::new();
    for p in 0..cfg.n_phantoms {
        let seed = phantom_seed(cfg.master_seed, p);
        let spec = random_phantom_spec(&ctx.cfg.dataset, seed);
        for &a in &cfg.accelerations {
            let inst = match ctx.instance(&spec, a, seed) {
                Ok(i) => i,
                Err(e) => {
                    for &m in &cfg.methods {
                        instances.push(failed_record(p, a, m, &e));
                    }
                    continue;
                }
            };
            let t0 = Instant::now();
            let x1 = match ctx.baseline(&inst) {
                Ok(x) => x,
                Err(e) => {
                    for &m in &cfg.methods {
                        instances.push(failed_record(p, a, m, &e));
                    }
                    continue;
                }
            };
            let base_secs = t0.elapsed().as_secs_f64();
            for &m in &cfg.methods {
                let t = Instant::now();
                let rec = evaluate_method(&ctx, p, &inst, &x1, m, derive_seed(seed, &[accel_tag(a), m.tag()]));
                let e = seconds.entry((accel_tag(a), m)).or_default();
                e.0 += t.elapsed().as_secs_f64() + base_secs;
                e.1 += 1;
                instances.push(rec);
            }
        }
    }
    let summary = summarize(&instances, &cfg.accelerations, &cfg.methods)?;
    let report = MetricReport {
        master_seed: cfg.master_seed,
        lesion_contrast: ctx.cfg.dataset.lesion_contrast,
        calibration,
        config: cfg.clone(),
        summary,
        instances,
    };
    let timings = TimingReport {
        per_image_seconds: seconds
            .into_iter()
            .map(|((a, m), (s, n))| (a as f64 / 1000.0, m, s / n as f64))
            .collect(),
        calibration_seconds,
        total_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(ExperimentOutput { report, timings })
}

fn failed_record(phantom: usize, acceleration: f64, method: Method, e: &SdrError) -> InstanceRecord {
    InstanceRecord {
        phantom,
        acceleration,
        method,
        n_ground_truth: 0,
        matched: 0,
        recall: None,
        n_images: 0,
        n_boxes: 0,
        max_consistency_residual: 0.0,
        mean_consistency_residual: 0.0,
        max_distance_to_initial: None,
        seeded_mean_distance: None,
        final_mean_distance: None,
        ground_truth: vec![],
        detections: vec![],
        per_image_detections: vec![],
        failure: Some(e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            n_phantoms: 2,
            accelerations: vec![1.0],
            methods: vec![Method::Baseline1],
            dataset: DatasetConfig {
                size: 64,
                n_coils: 2,
                lesion_contrast: 0.6,
                mean_lesions: 1.5,
                ..DatasetConfig::default()
            },
            calibrate: false,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn fully_sampled_high_contrast_recall_is_one() {
        let out = run_experiment(&small()).unwrap();
        let s = out.report.summary_for(1.0, Method::Baseline1).unwrap();
        assert_eq!(s.n_failures, 0);
        assert_eq!(s.recall, Some(1.0));
    }

    #[test]
    fn same_seed_same_report() {
        let mut cfg = small();
        cfg.methods = vec![Method::Baseline1, Method::SdrM];
        cfg.accelerations = vec![4.0];
        cfg.sdr.n_opt = 3;
        let a = serde_json::to_string(&run_experiment(&cfg).unwrap().report).unwrap();
        let b = serde_json::to_string(&run_experiment(&cfg).unwrap().report).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert!("sdr".parse::<Method>().is_err());
    }

    #[test]
    fn fully_sampled_calibration_is_unreachable() {
        let mut cfg = small();
        cfg.calibration = CalibrationConfig {
            acceleration: 1.0,
            n_phantoms: 4,
            contrast_bounds: [0.3, 1.0],
            ..CalibrationConfig::default()
        };
        let ctx = Context::new(cfg.clone()).unwrap();
        let err = calibrate_lesion_contrast(&ctx, &cfg.calibration).unwrap_err();
        assert!(err.to_string().contains("band unreachable"), "{err}");
    }
}

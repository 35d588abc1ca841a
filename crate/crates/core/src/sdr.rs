//! Semantically diverse reconstructions: projected gradient ascent on
//! pairwise box-feature distances, with every iterate pushed back into the
//! ℓ2 ball around the initial reconstruction and made data consistent.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::detect::BoundingBox;
use crate::encoder::{distance_gradient, encode_boxes, feature_distance_with, Aggregation, BoxFeatures, EncoderModel};
use crate::error::{invalid, Result, SdrError};
use crate::mri::{AcquisitionData, ComplexImage, EncodingOperator};
use crate::recon::{consistency_residual_with, data_consistency_with, project_ball, BallConstraint, DcConfig, DEFAULT_RADIUS};

/// When the feature vector of an updated reconstruction becomes visible to
/// the others.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateMode {
    /// Re-encode right after each image update.
    #[default]
    GaussSeidel,
    /// All images use features taken at the start of the sweep.
    Jacobi,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AscentMode {
    /// Step of length η along the unit gradient.
    #[default]
    Normalized,
    /// Step η·∇.
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdrParams {
    pub n_rec: usize,
    pub n_opt: usize,
    pub step_size: f64,
    /// Standard deviation of each real component of the seed noise.
    pub init_sigma: f64,
    pub radius: f64,
    pub dc: DcConfig,
    pub seed: u64,
    #[serde(default)]
    pub update: UpdateMode,
    #[serde(default)]
    pub ascent: AscentMode,
    #[serde(default)]
    pub aggregation: Aggregation,
}

impl Default for SdrParams {
    fn default() -> Self {
        Self {
            n_rec: 3,
            n_opt: 50,
            step_size: 0.1,
            init_sigma: 0.005,
            radius: DEFAULT_RADIUS,
            dc: DcConfig::default(),
            seed: 0,
            update: UpdateMode::default(),
            ascent: AscentMode::default(),
            aggregation: Aggregation::default(),
        }
    }
}

impl SdrParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_rec < 2 {
            return Err(invalid("n_rec must be at least 2"));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(invalid("step_size must be positive"));
        }
        if !(self.init_sigma >= 0.0) || !self.init_sigma.is_finite() {
            return Err(invalid("init_sigma must be non-negative"));
        }
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(invalid("radius must be positive"));
        }
        self.dc.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconProvenance {
    /// Seed of the initial noise (`None` for the first element).
    pub seed: Option<u64>,
    /// `Σ_{j≠i} d(x_i, x_j)` at the end.
    pub final_distance: f64,
    pub consistency_residual: f64,
    /// `‖x_i − x̂₁‖₂` where `x̂₁ = DC(x1)` is the ball center.
    pub distance_to_initial: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionSet {
    /// `images[0]` is `DC(x1)`; the rest are the diverse reconstructions.
    pub images: Vec<ComplexImage>,
    pub provenance: Vec<ReconProvenance>,
    pub boxes: Vec<BoundingBox>,
    pub radius: f64,
    /// Mean pairwise distance right after seeding.
    pub seeded_mean_distance: f64,
    /// Mean pairwise distance after each outer iteration.
    pub distance_trace: Vec<f64>,
}

impl ReconstructionSet {
    pub fn final_mean_distance(&self) -> f64 {
        self.distance_trace.last().copied().unwrap_or(self.seeded_mean_distance)
    }
}

fn pairwise(features: &[BoxFeatures], agg: Aggregation) -> Result<Vec<Vec<f64>>> {
    let n = features.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = feature_distance_with(&features[i], &features[j], agg)?;
            m[i][j] = d;
            m[j][i] = d;
        }
    }
    Ok(m)
}

fn mean_off_diagonal(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    if n < 2 {
        return 0.0;
    }
    let sum: f64 = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| m[i][j]).sum();
    sum / (n * (n - 1) / 2) as f64
}

/// Seed of the noise for reconstruction `i`.
pub fn image_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn gaussian_noise(w: usize, h: usize, sigma: f64, seed: u64) -> ComplexImage {
    if sigma == 0.0 {
        return ComplexImage::zeros(w, h);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(0.0, sigma).expect("finite sigma");
    let data = (0..w * h).map(|_| Complex64::new(d.sample(&mut rng), d.sample(&mut rng))).collect();
    ComplexImage::from_vec_unchecked(w, h, data)
}

/// Generates `n_rec` diverse, data-consistent reconstructions around `x1`.
pub fn sdr_generate(
    acq: &AcquisitionData,
    x1: &ComplexImage,
    model: &EncoderModel,
    boxes: &[BoundingBox],
    p: &SdrParams,
) -> Result<ReconstructionSet> {
    sdr_generate_with(acq, x1, model, boxes, p, |_| true)
}

/// Ball projection, then data consistency of the deviation from the center
/// against zero data (`op0` carries an all-zero measurement). The CG part
/// cannot lengthen the deviation and the replacement applies `I − AᴴA`, so the
/// result stays in the ball, while the center's fit to the measurement is
/// kept as is. Restarting CG on the measured data instead would keep fitting
/// noise along near-null directions of `AᴴA` and drift by far more than `r`.
/// The final projection only absorbs rounding.
fn constrain(op0: &EncodingOperator<'_>, x: &ComplexImage, ball: &BallConstraint, dc: &DcConfig) -> Result<ComplexImage> {
    let deviation = project_ball(x, ball)?.sub(&ball.center);
    let y = ball.center.add(&data_consistency_with(op0, &deviation, dc)?);
    project_ball(&y, ball)
}

fn zero_data(acq: &AcquisitionData) -> Result<AcquisitionData> {
    let kspace = acq.kspace.iter().map(|k| ComplexImage::zeros(k.width(), k.height())).collect();
    AcquisitionData::new(kspace, acq.mask.clone(), acq.sens.clone())
}

/// Like [`sdr_generate`]; `control(k)` runs before outer iteration `k` and
/// returning `false` stops with [`SdrError::Cancelled`].
pub fn sdr_generate_with(
    acq: &AcquisitionData,
    x1: &ComplexImage,
    model: &EncoderModel,
    boxes: &[BoundingBox],
    p: &SdrParams,
    mut control: impl FnMut(usize) -> bool,
) -> Result<ReconstructionSet> {
    p.validate()?;
    model.validate()?;
    if boxes.is_empty() {
        return Err(invalid("box list is empty"));
    }
    if !x1.is_finite() {
        return Err(invalid("initial reconstruction contains non-finite values"));
    }
    let op = EncodingOperator::new(acq);
    op.check(x1)?;
    let (w, h) = (x1.width(), x1.height());
    let fail = |i: usize, k: usize, what: &str| SdrError::NumericFailure {
        context: format!("{what} for reconstruction {}", i + 1),
        iteration: k,
    };

    let anchor = data_consistency_with(&op, x1, &p.dc).map_err(|_| fail(0, 0, "seeding"))?;
    let ball = BallConstraint::new(anchor.clone(), p.radius)?;
    let zero = zero_data(acq)?;
    let op0 = EncodingOperator::new(&zero);
    let mut images = Vec::with_capacity(p.n_rec);
    images.push(anchor.clone());
    for i in 1..p.n_rec {
        let start = anchor.add(&gaussian_noise(w, h, p.init_sigma, image_seed(p.seed, i)));
        images.push(constrain(&op0, &start, &ball, &p.dc).map_err(|_| fail(i, 0, "seeding"))?);
    }
    let mut features = images
        .iter()
        .map(|x| encode_boxes(model, x, boxes))
        .collect::<Result<Vec<_>>>()?;
    let seeded_mean_distance = mean_off_diagonal(&pairwise(&features, p.aggregation)?);
    let mut distance_trace = Vec::with_capacity(p.n_opt);

    for k in 0..p.n_opt {
        if !control(k) {
            return Err(SdrError::Cancelled {
                completed_iterations: k,
                total_iterations: p.n_opt,
            });
        }
        let snapshot = match p.update {
            UpdateMode::Jacobi => Some(features.clone()),
            UpdateMode::GaussSeidel => None,
        };
        for i in 1..p.n_rec {
            let source = snapshot.as_ref().unwrap_or(&features);
            let others: Vec<BoxFeatures> = source
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, f)| f.clone())
                .collect();
            let g = distance_gradient(model, &images[i], &others, boxes, p.aggregation)?;
            let gn = g.gradient.norm();
            if !gn.is_finite() {
                return Err(fail(i, k + 1, "ascent gradient"));
            }
            let mut x = images[i].clone();
            let scale = match p.ascent {
                AscentMode::Normalized if gn > 0.0 => p.step_size / gn,
                AscentMode::Normalized => 0.0,
                AscentMode::Raw => p.step_size,
            };
            x.axpy(Complex64::new(scale, 0.0), &g.gradient);
            let x = constrain(&op0, &x, &ball, &p.dc).map_err(|_| fail(i, k + 1, "data consistency"))?;
            if !x.is_finite() {
                return Err(fail(i, k + 1, "data consistency"));
            }
            features[i] = encode_boxes(model, &x, boxes)?;
            images[i] = x;
        }
        distance_trace.push(mean_off_diagonal(&pairwise(&features, p.aggregation)?));
    }

    let matrix = pairwise(&features, p.aggregation)?;
    let provenance = images
        .iter()
        .enumerate()
        .map(|(i, x)| {
            Ok(ReconProvenance {
                seed: (i > 0).then(|| image_seed(p.seed, i)),
                final_distance: matrix[i].iter().sum(),
                consistency_residual: consistency_residual_with(&op, x)?,
                distance_to_initial: x.distance(&anchor),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReconstructionSet {
        images,
        provenance,
        boxes: boxes.to_vec(),
        radius: p.radius,
        seeded_mean_distance,
        distance_trace,
    })
}

/// Symmetric matrix of pairwise feature distances with a zero diagonal.
pub fn diversity_matrix(set: &ReconstructionSet, model: &EncoderModel, boxes: &[BoundingBox]) -> Result<Vec<Vec<f64>>> {
    diversity_matrix_with(set, model, boxes, Aggregation::default())
}

pub fn diversity_matrix_with(
    set: &ReconstructionSet,
    model: &EncoderModel,
    boxes: &[BoundingBox],
    agg: Aggregation,
) -> Result<Vec<Vec<f64>>> {
    if set.images.is_empty() {
        return Err(invalid("reconstruction set is empty"));
    }
    let features = set
        .images
        .iter()
        .map(|x| encode_boxes(model, x, boxes))
        .collect::<Result<Vec<_>>>()?;
    pairwise(&features, agg)
}

/// Mean of the strictly upper triangle.
pub fn mean_pairwise(matrix: &[Vec<f64>]) -> f64 {
    mean_off_diagonal(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mri::{
        make_phantom, make_sampling_mask, simulate_acquisition, CoilSensitivities, Ellipse, Lesion, LesionShape, MaskKind,
        PhantomSpec,
    };
    use crate::recon::{cg_least_squares, zero_filled_recon};

    fn setup(size: usize, accel: f64, coils: usize) -> (AcquisitionData, ComplexImage, Vec<BoundingBox>) {
        let c = size as f64 / 2.0;
        let spec = PhantomSpec {
            width: size,
            height: size,
            ellipses: vec![Ellipse {
                center: [0.0, 0.0],
                axes: [0.8, 0.9],
                angle_deg: 0.0,
                intensity: 1.0,
            }],
            lesions: vec![Lesion {
                shape: LesionShape::Disc,
                center: [c - 5.5, c + 0.5],
                radius: 3.0,
                contrast: 0.4,
                class_id: 0,
            }],
            bias_amplitude: 0.0,
            seed: 3,
        };
        let ph = make_phantom(&spec).unwrap();
        let sens = if coils == 1 {
            CoilSensitivities::single(size, size)
        } else {
            CoilSensitivities::synthetic(size, size, coils).unwrap()
        };
        let mask = make_sampling_mask(size, accel, 0.08, MaskKind::Equispaced, 1).unwrap();
        let acq = simulate_acquisition(&ph.image, &sens, &mask, 0.0, 0).unwrap();
        let dc = DcConfig {
            cg_iters: 200,
            cg_tol: 1e-12,
            replacement: false,
        };
        let x1 = cg_least_squares(&acq, &zero_filled_recon(&acq), &dc).unwrap();
        let boxes = ph.ground_truth.iter().map(|g| g.bbox).collect();
        (acq, x1, boxes)
    }

    fn params(n_opt: usize, sigma: f64) -> SdrParams {
        SdrParams {
            n_opt,
            init_sigma: sigma,
            seed: 5,
            ..SdrParams::default()
        }
    }

    #[test]
    fn no_steps_no_noise_gives_identical_outputs() {
        let (acq, x1, boxes) = setup(32, 4.0, 2);
        let model = EncoderModel::reference(0);
        let set = sdr_generate(&acq, &x1, &model, &boxes, &params(0, 0.0)).unwrap();
        let dc = data_consistency_with(&acq.operator(), &x1, &DcConfig::default()).unwrap();
        assert_eq!(set.images[0], dc);
        for img in &set.images[1..] {
            assert!(img.distance(&dc) <= 1e-6 * dc.norm(), "{}", img.distance(&dc));
        }
        let m = diversity_matrix(&set, &model, &boxes).unwrap();
        assert!(m.iter().flatten().all(|&v| v < 1e-6));
    }

    #[test]
    fn outputs_satisfy_contracts_and_diversify() {
        let (acq, x1, boxes) = setup(48, 8.0, 4);
        let model = EncoderModel::reference(0);
        let set = sdr_generate(&acq, &x1, &model, &boxes, &params(15, 0.005)).unwrap();
        assert_eq!(set.images.len(), 3);
        for p in &set.provenance {
            assert!(p.distance_to_initial <= 3.0 * (1.0 + 1e-6), "{}", p.distance_to_initial);
            assert!(p.consistency_residual <= 1e-3, "{}", p.consistency_residual);
        }
        assert!(set.final_mean_distance() > set.seeded_mean_distance);
        let m = diversity_matrix(&set, &model, &boxes).unwrap();
        for i in 0..3 {
            assert_eq!(m[i][i], 0.0);
            for j in 0..3 {
                assert_eq!(m[i][j], m[j][i]);
                if i != j {
                    assert!(m[i][j] > 0.0);
                }
            }
        }
    }

    #[test]
    fn single_coil_full_mask_is_exactly_consistent() {
        let (acq, x1, boxes) = setup(32, 1.0, 1);
        let set = sdr_generate(&acq, &x1, &EncoderModel::reference(1), &boxes, &params(5, 0.01)).unwrap();
        for p in &set.provenance {
            assert!(p.consistency_residual <= 1e-12, "{}", p.consistency_residual);
        }
    }

    #[test]
    fn deterministic_and_jacobi_mode_runs() {
        let (acq, x1, boxes) = setup(32, 4.0, 2);
        let model = EncoderModel::reference(2);
        let a = sdr_generate(&acq, &x1, &model, &boxes, &params(4, 0.01)).unwrap();
        let b = sdr_generate(&acq, &x1, &model, &boxes, &params(4, 0.01)).unwrap();
        assert_eq!(a, b);
        let jac = SdrParams {
            update: UpdateMode::Jacobi,
            ..params(4, 0.01)
        };
        let c = sdr_generate(&acq, &x1, &model, &boxes, &jac).unwrap();
        assert_eq!(c.images[0], a.images[0]);
        assert_ne!(c.images[2], a.images[2]);
    }

    #[test]
    fn control_hook_cancels() {
        let (acq, x1, boxes) = setup(32, 4.0, 2);
        let err = sdr_generate_with(&acq, &x1, &EncoderModel::reference(0), &boxes, &params(10, 0.0), |k| k < 3).unwrap_err();
        assert!(matches!(
            err,
            SdrError::Cancelled {
                completed_iterations: 3,
                total_iterations: 10
            }
        ));
    }

    #[test]
    fn rejects_bad_inputs() {
        let (acq, x1, boxes) = setup(32, 4.0, 2);
        let model = EncoderModel::reference(0);
        assert!(sdr_generate(&acq, &x1, &model, &[], &params(1, 0.0)).is_err());
        let one = SdrParams { n_rec: 1, ..params(1, 0.0) };
        assert!(sdr_generate(&acq, &x1, &model, &boxes, &one).is_err());
    }
}

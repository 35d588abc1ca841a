//! Baseline reconstruction and the two projections used by the diversity
//! ascent: data consistency (CG least squares followed by measured-sample
//! replacement) and the ℓ2-ball projection around the initial reconstruction.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SdrError};
use crate::mri::{AcquisitionData, ComplexImage, EncodingOperator};

/// Default radius of the feasible ball around the initial reconstruction.
pub const DEFAULT_RADIUS: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DcConfig {
    /// Maximum conjugate-gradient steps before sample replacement.
    pub cg_iters: usize,
    /// Stop once `‖Aᴴ(y − Ax)‖ ≤ cg_tol · ‖Aᴴy‖`.
    pub cg_tol: f64,
    /// Overwrite measured k-space samples after CG.
    pub replacement: bool,
}

impl Default for DcConfig {
    fn default() -> Self {
        Self {
            cg_iters: 10,
            cg_tol: 1e-6,
            replacement: true,
        }
    }
}

impl DcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cg_tol > 0.0) {
            return Err(invalid("cg_tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallConstraint {
    pub center: ComplexImage,
    pub radius: f64,
}

impl BallConstraint {
    pub fn new(center: ComplexImage, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(invalid(format!("ball radius {radius} must be positive")));
        }
        Ok(Self { center, radius })
    }
}

/// Per-iteration record of a CG solve.
#[derive(Clone, Debug, Default)]
pub struct CgTrace {
    pub iterations: usize,
    /// Normal-equation residual norm, starting with the initial residual.
    pub residuals: Vec<f64>,
}

/// Conjugate gradient for a Hermitian positive semi-definite operator.
///
/// Stops after `max_iters` steps, when `‖r‖ ≤ tol · ‖b‖`, or when the search
/// direction has no curvature left. `on_iter` sees each new iterate.
pub fn conjugate_gradient(
    apply: impl Fn(&ComplexImage) -> ComplexImage,
    b: &ComplexImage,
    x0: &ComplexImage,
    max_iters: usize,
    tol: f64,
    mut on_iter: impl FnMut(&ComplexImage),
) -> Result<(ComplexImage, CgTrace)> {
    let b_norm = b.norm();
    let mut x = x0.clone();
    let mut r = b.sub(&apply(&x));
    let mut p = r.clone();
    let mut rs = r.norm_sqr();
    let mut trace = CgTrace {
        iterations: 0,
        residuals: vec![rs.sqrt()],
    };
    let threshold = tol * b_norm;
    if rs.sqrt() <= threshold {
        return Ok((x, trace));
    }
    for k in 0..max_iters {
        let ap = apply(&p);
        let curvature = p.real_dot(&ap);
        if curvature <= 0.0 {
            break;
        }
        let alpha = rs / curvature;
        if !alpha.is_finite() {
            return Err(SdrError::NumericFailure {
                context: "conjugate gradient step".into(),
                iteration: k,
            });
        }
        x.axpy(Complex64::new(alpha, 0.0), &p);
        r.axpy(Complex64::new(-alpha, 0.0), &ap);
        let rs_new = r.norm_sqr();
        if !rs_new.is_finite() || !x.is_finite() {
            return Err(SdrError::NumericFailure {
                context: "conjugate gradient residual".into(),
                iteration: k,
            });
        }
        trace.iterations = k + 1;
        trace.residuals.push(rs_new.sqrt());
        on_iter(&x);
        if rs_new.sqrt() <= threshold {
            break;
        }
        let beta = rs_new / rs;
        for (pv, rv) in p.data_mut().iter_mut().zip(r.data()) {
            *pv = rv + *pv * beta;
        }
        rs = rs_new;
    }
    Ok((x, trace))
}

/// Adjoint of the measured data, `Aᴴy`.
pub fn zero_filled_recon(acq: &AcquisitionData) -> ComplexImage {
    acq.operator().adjoint_data()
}

/// CG on the normal equations `AᴴA x = Aᴴy` starting from `x0`.
pub fn cg_least_squares(acq: &AcquisitionData, x0: &ComplexImage, cfg: &DcConfig) -> Result<ComplexImage> {
    let op = acq.operator();
    cg_least_squares_with(&op, x0, cfg, |_| {}).map(|(x, _)| x)
}

/// Like [`cg_least_squares`] on a prepared operator, with a per-iterate hook
/// and the CG trace.
pub fn cg_least_squares_with(
    op: &EncodingOperator<'_>,
    x0: &ComplexImage,
    cfg: &DcConfig,
    on_iter: impl FnMut(&ComplexImage),
) -> Result<(ComplexImage, CgTrace)> {
    cfg.validate()?;
    op.check(x0)?;
    let rhs = op.adjoint_data();
    conjugate_gradient(|v| op.normal(v), &rhs, x0, cfg.cg_iters, cfg.cg_tol, on_iter)
}

/// Data-consistency projection: CG least squares from `x`, then replace the
/// sampled k-space of each coil image with the measurement and recombine.
pub fn data_consistency(x: &ComplexImage, acq: &AcquisitionData, cfg: &DcConfig) -> Result<ComplexImage> {
    data_consistency_with(&acq.operator(), x, cfg)
}

pub fn data_consistency_with(op: &EncodingOperator<'_>, x: &ComplexImage, cfg: &DcConfig) -> Result<ComplexImage> {
    let (fitted, _) = cg_least_squares_with(op, x, cfg, |_| {})?;
    if cfg.replacement {
        Ok(op.replace_measured(&fitted))
    } else {
        Ok(fitted)
    }
}

/// `‖M⊙(F S x) − y‖₂ / ‖y‖₂`.
pub fn consistency_residual(x: &ComplexImage, acq: &AcquisitionData) -> Result<f64> {
    consistency_residual_with(&acq.operator(), x)
}

pub fn consistency_residual_with(op: &EncodingOperator<'_>, x: &ComplexImage) -> Result<f64> {
    op.check(x)?;
    let y_norm = op.data_norm();
    if y_norm == 0.0 {
        return Err(invalid("consistency residual undefined for all-zero measurements"));
    }
    Ok(op.residual_norm(x) / y_norm)
}

/// Euclidean projection onto `{x : ‖x − center‖₂ ≤ radius}`.
pub fn project_ball(x: &ComplexImage, ball: &BallConstraint) -> Result<ComplexImage> {
    ball.center.check_shape(x, "project_ball")?;
    let d = x.distance(&ball.center);
    if d <= ball.radius {
        return Ok(x.clone());
    }
    let s = ball.radius / d;
    let data = x
        .data()
        .iter()
        .zip(ball.center.data())
        .map(|(v, c)| c + (v - c) * s)
        .collect();
    Ok(ComplexImage::from_vec_unchecked(x.width(), x.height(), data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mri::{make_sampling_mask, simulate_acquisition, CoilSensitivities, MaskKind, SamplingMask};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> ComplexImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        ComplexImage::from_vec(w, h, data).unwrap()
    }

    fn single_full(x: &ComplexImage) -> AcquisitionData {
        let (w, h) = (x.width(), x.height());
        simulate_acquisition(x, &CoilSensitivities::single(w, h), &SamplingMask::full(w), 0.0, 0).unwrap()
    }

    fn multicoil(x: &ComplexImage, accel: f64, seed: u64) -> AcquisitionData {
        let (w, h) = (x.width(), x.height());
        let sens = CoilSensitivities::synthetic(w, h, 4).unwrap();
        let mask = make_sampling_mask(w, accel, 0.08, MaskKind::Equispaced, seed).unwrap();
        simulate_acquisition(x, &sens, &mask, 0.0, seed).unwrap()
    }

    #[test]
    fn zero_filled_full_single_coil_is_exact() {
        let x = random_image(16, 16, 1);
        let acq = single_full(&x);
        assert!(zero_filled_recon(&acq).distance(&x) < 1e-10 * x.norm());
    }

    #[test]
    fn zero_filled_is_linear_and_aliased() {
        let x = random_image(32, 32, 2);
        let mut acq = multicoil(&x, 4.0, 2);
        let r1 = zero_filled_recon(&acq);
        assert!(r1.distance(&x) > 0.0);
        for k in &mut acq.kspace {
            k.scale(2.5);
        }
        let r2 = zero_filled_recon(&acq);
        assert!(r2.distance(&r1.scaled(2.5)) < 1e-12 * r2.norm());
    }

    #[test]
    fn cg_keeps_exact_solution() {
        let x = random_image(16, 16, 3);
        let acq = single_full(&x);
        let (out, trace) = cg_least_squares_with(&acq.operator(), &x, &DcConfig::default(), |_| {}).unwrap();
        assert_eq!(trace.iterations, 0);
        assert_eq!(out, x);
    }

    #[test]
    fn cg_full_mask_converges_immediately() {
        let x = random_image(16, 16, 4);
        let acq = single_full(&x);
        let cfg = DcConfig {
            cg_iters: 2,
            ..DcConfig::default()
        };
        let out = cg_least_squares(&acq, &ComplexImage::zeros(16, 16), &cfg).unwrap();
        assert!(out.distance(&x) < 1e-8 * x.norm());
    }

    #[test]
    fn cg_objective_decreases_at_eight_x() {
        for seed in 0..10 {
            let x = random_image(32, 32, 100 + seed);
            let acq = multicoil(&x, 8.0, seed);
            let op = acq.operator();
            let cfg = DcConfig {
                cg_iters: 20,
                cg_tol: 1e-14,
                replacement: true,
            };
            let mut objectives = vec![op.residual_norm(&ComplexImage::zeros(32, 32))];
            cg_least_squares_with(&op, &ComplexImage::zeros(32, 32), &cfg, |xk| {
                objectives.push(op.residual_norm(xk))
            })
            .unwrap();
            for pair in objectives.windows(2) {
                assert!(pair[1] < pair[0], "seed {seed}: {pair:?}");
            }
        }
    }

    #[test]
    fn cg_exact_on_small_spd_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=8usize {
            // Hermitian positive definite matrix B = GᴴG + I.
            let g: Vec<Complex64> = (0..n * n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let mut m = vec![Complex64::new(0.0, 0.0); n * n];
            for i in 0..n {
                for j in 0..n {
                    let mut s: Complex64 = (0..n).map(|k| g[k * n + i].conj() * g[k * n + j]).sum();
                    if i == j {
                        s += 1.0;
                    }
                    m[i * n + j] = s;
                }
            }
            let apply = |v: &ComplexImage| {
                let d = v.data();
                let out = (0..n).map(|i| (0..n).map(|j| m[i * n + j] * d[j]).sum()).collect();
                ComplexImage::from_vec_unchecked(n, 1, out)
            };
            let truth = random_image(n, 1, 50 + n as u64);
            let b = apply(&truth);
            let (x, trace) = conjugate_gradient(apply, &b, &ComplexImage::zeros(n, 1), n, 1e-15, |_| {}).unwrap();
            assert!(trace.iterations <= n);
            assert!(x.distance(&truth) <= 1e-8 * truth.norm(), "n={n}");
        }
    }

    #[test]
    fn dc_single_coil_full_mask_replaces_everything() {
        let x = random_image(16, 16, 5);
        let acq = single_full(&x);
        let start = random_image(16, 16, 6);
        let cfg = DcConfig {
            cg_iters: 0,
            ..DcConfig::default()
        };
        let out = data_consistency(&start, &acq, &cfg).unwrap();
        assert!(consistency_residual(&out, &acq).unwrap() <= 1e-12);
    }

    #[test]
    fn dc_leaves_consistent_images_alone() {
        let x = random_image(32, 32, 8);
        let acq = multicoil(&x, 4.0, 8);
        let cfg = DcConfig::default();
        let solved = cg_least_squares(
            &acq,
            &zero_filled_recon(&acq),
            &DcConfig {
                cg_iters: 500,
                cg_tol: 1e-13,
                replacement: true,
            },
        )
        .unwrap();
        let out = data_consistency(&solved, &acq, &cfg).unwrap();
        assert!(out.distance(&solved) <= 1e-6 * solved.norm());
    }

    #[test]
    fn residual_of_truth_and_zero() {
        let x = random_image(32, 32, 9);
        let acq = multicoil(&x, 4.0, 9);
        assert!(consistency_residual(&x, &acq).unwrap() < 1e-12);
        let zero = ComplexImage::zeros(32, 32);
        assert!((consistency_residual(&zero, &acq).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn residual_needs_nonzero_data() {
        let acq = single_full(&ComplexImage::zeros(8, 8));
        assert!(consistency_residual(&ComplexImage::zeros(8, 8), &acq).is_err());
    }

    #[test]
    fn ball_examples() {
        let c = ComplexImage::zeros(4, 4);
        let ball = BallConstraint::new(c.clone(), 3.0).unwrap();
        let inside = ComplexImage::from_real(4, 4, &[0.5; 16]).unwrap();
        assert_eq!(project_ball(&inside, &ball).unwrap(), inside);
        // ‖x − c‖ = 6 → scaled by one half.
        let far = ComplexImage::from_real(4, 4, &[1.5; 16]).unwrap();
        let p = project_ball(&far, &ball).unwrap();
        assert!((p.distance(&c) - 3.0).abs() < 1e-12);
        assert!(p.distance(&far.scaled(0.5)) < 1e-12);
        assert!(BallConstraint::new(c, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn ball_projection_properties(seed_a in 0u64..1000, seed_b in 0u64..1000, scale in 0.1..10.0f64) {
            let center = random_image(6, 5, 1);
            let ball = BallConstraint::new(center.clone(), DEFAULT_RADIUS).unwrap();
            let x = center.add(&random_image(6, 5, seed_a).scaled(scale));
            let z = center.add(&random_image(6, 5, seed_b).scaled(scale));
            let px = project_ball(&x, &ball).unwrap();
            let pz = project_ball(&z, &ball).unwrap();
            let d_in = x.distance(&center);
            prop_assert!((px.distance(&center) - d_in.min(DEFAULT_RADIUS)).abs() <= 1e-9);
            prop_assert!(project_ball(&px, &ball).unwrap().distance(&px) <= 1e-12);
            prop_assert!(px.distance(&pz) <= x.distance(&z) + 1e-9);
        }
    }
}

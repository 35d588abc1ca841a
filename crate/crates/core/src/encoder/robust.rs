//! Adversarially robust fine-tuning of the backbone:
//!
//! `min_φ Σ_i max_{‖δ‖₂ ≤ r} ‖g_φ(x_i + δ) − g_{φ_org}(x_i)‖₂²`
//!
//! The inner maximization is ℓ2 PGD on the magnitude input; the outer
//! minimization is Adam on the backbone parameters with δ held fixed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::backbone::{self, BackboneGrads, BackboneParams};
use super::model::{EncoderModel, EncoderVariant, MAGNITUDE_EPS};
use crate::detect::PixelRect;
use crate::error::{invalid, Result, SdrError};
use crate::mri::ComplexImage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustTrainConfig {
    /// ℓ2 radius `r` of the input perturbation.
    pub perturbation_budget: f64,
    pub inner_pgd_steps: usize,
    /// ℓ2 length of one normalized PGD step.
    pub inner_step_size: f64,
    pub outer_steps: usize,
    pub outer_learning_rate: f64,
    pub batch_size: usize,
    /// Side of the random square crop used per batch element; 0 uses whole
    /// images. The objective sums over pixels, so a model tuned on crops can
    /// score worse on whole images than the untuned one.
    pub crop: usize,
    pub seed: u64,
}

impl Default for RobustTrainConfig {
    fn default() -> Self {
        Self {
            perturbation_budget: 0.5,
            inner_pgd_steps: 5,
            inner_step_size: 0.25,
            outer_steps: 200,
            outer_learning_rate: 0.01,
            batch_size: 4,
            crop: 0,
            seed: 0,
        }
    }
}

impl RobustTrainConfig {
    /// Full-scale constants (r = 10, 20 000 steps, batch 16). Kept for
    /// reference; far beyond a desk-scale run.
    pub fn full_scale() -> Self {
        Self {
            perturbation_budget: 10.0,
            outer_steps: 20_000,
            batch_size: 16,
            ..Self::default()
        }
    }

    /// A zero budget is accepted and makes training a no-op.
    pub fn validate(&self) -> Result<()> {
        if !(self.perturbation_budget >= 0.0 && self.perturbation_budget.is_finite()) {
            return Err(invalid("perturbation_budget must be finite and non-negative"));
        }
        if self.inner_pgd_steps == 0 || self.outer_steps == 0 || self.batch_size == 0 {
            return Err(invalid("step counts and batch size must be positive"));
        }
        if !(self.inner_step_size > 0.0) || !(self.outer_learning_rate > 0.0) {
            return Err(invalid("step sizes must be positive"));
        }
        Ok(())
    }
}

/// Inner-max objective per outer step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub entries: Vec<(usize, f64)>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,objective\n");
        for (step, obj) in &self.entries {
            out.push_str(&format!("{step},{obj}\n"));
        }
        out
    }
}

/// Magnitude plane fed to the backbone.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    /// Backbone input `scale · |x|`.
    pub fn magnitude(x: &ComplexImage, scale: f64) -> Self {
        Self {
            width: x.width(),
            height: x.height(),
            data: x
                .data()
                .iter()
                .map(|z| scale * (z.norm_sqr() + MAGNITUDE_EPS * MAGNITUDE_EPS).sqrt())
                .collect(),
        }
    }

    fn crop(&self, side: usize, rng: &mut ChaCha8Rng) -> Self {
        if side == 0 || side >= self.width || side >= self.height {
            return self.clone();
        }
        let x0 = rng.random_range(0..=self.width - side);
        let y0 = rng.random_range(0..=self.height - side);
        let data = (y0..y0 + side)
            .flat_map(|y| self.data[y * self.width + x0..y * self.width + x0 + side].iter().copied())
            .collect();
        Self {
            width: side,
            height: side,
            data,
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn run(params: BackboneParams<'_>, input: Vec<f64>, w: usize, h: usize) -> backbone::BackboneCache {
    backbone::forward(params, input, w, h, PixelRect::full(w, h))
}

fn objective_and_residual(output: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let resid: Vec<f64> = output.iter().zip(target).map(|(a, b)| a - b).collect();
    (resid.iter().map(|r| r * r).sum(), resid)
}

/// ℓ2 PGD estimate of `max_{‖δ‖ ≤ r} ‖g(x + δ) − target‖²`. Returns the
/// final perturbation and the largest objective seen.
fn pgd(
    params: BackboneParams<'_>,
    x: &Plane,
    target: &[f64],
    radius: f64,
    steps: usize,
    step_size: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, f64) {
    let n = x.data.len();
    let mut delta = vec![0.0; n];
    if radius > 0.0 {
        // δ = 0 is a stationary point of the objective, so start off-center.
        let dir: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let s = 0.5 * radius / norm(&dir);
        delta.iter_mut().zip(&dir).for_each(|(d, v)| *d = v * s);
    }
    let mut best = f64::NEG_INFINITY;
    for step in 0..=steps {
        let input: Vec<f64> = x.data.iter().zip(&delta).map(|(a, d)| a + d).collect();
        let cache = run(params, input, x.width, x.height);
        let (obj, resid) = objective_and_residual(&cache.output, target);
        best = best.max(obj);
        if step == steps || radius == 0.0 {
            break;
        }
        let grad_out: Vec<f64> = resid.iter().map(|r| 2.0 * r).collect();
        let g = backbone::backward(params, &cache, &grad_out, None);
        let gn = norm(&g);
        if gn == 0.0 {
            break;
        }
        delta.iter_mut().zip(&g).for_each(|(d, gi)| *d += step_size * gi / gn);
        let dn = norm(&delta);
        if dn > radius {
            delta.iter_mut().for_each(|d| *d *= radius / dn);
        }
    }
    (delta, best)
}

/// Mean over `images` of the PGD-estimated
/// `max_{‖δ‖ ≤ r} ‖g_model(x + δ) − g_reference(x)‖²`.
pub fn inner_max_objective(
    model: &EncoderModel,
    reference: &EncoderModel,
    images: &[ComplexImage],
    radius: f64,
    pgd_steps: usize,
    seed: u64,
) -> Result<f64> {
    if images.is_empty() {
        return Err(invalid("no images"));
    }
    if model.channels != reference.channels || model.input_scale != reference.input_scale {
        return Err(invalid("model and reference differ in channel count or input scale"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = 2.5 * radius / pgd_steps.max(1) as f64;
    let mut total = 0.0;
    for img in images {
        let x = Plane::magnitude(img, model.input_scale);
        let target = run(reference.backbone_params(), x.data.clone(), x.width, x.height).output;
        let (_, best) = pgd(model.backbone_params(), &x, &target, radius, pgd_steps, step, &mut rng);
        total += best;
    }
    Ok(total / images.len() as f64)
}

/// `max_{‖δ‖ ≤ r} ‖g(x + δ) − g(x)‖²`, averaged over `images`.
pub fn robustness_metric(model: &EncoderModel, images: &[ComplexImage], radius: f64, pgd_steps: usize, seed: u64) -> Result<f64> {
    inner_max_objective(model, model, images, radius, pgd_steps, seed)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [&mut Vec<f64>], grads: &[&Vec<f64>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let mut k = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            for (pi, gi) in p.iter_mut().zip(g.iter()) {
                self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * gi;
                self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * gi * gi;
                *pi -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
                k += 1;
            }
        }
    }
}

/// Fine-tunes the backbone of a trainable model. The head is left untouched.
pub fn robust_finetune(model: &EncoderModel, images: &[ComplexImage], cfg: &RobustTrainConfig) -> Result<(EncoderModel, TrainingLog)> {
    cfg.validate()?;
    model.validate()?;
    if model.variant != EncoderVariant::Trainable {
        return Err(invalid("robust fine-tuning requires a trainable encoder"));
    }
    if images.is_empty() {
        return Err(invalid("no training images"));
    }
    let original = model.clone();
    let mut tuned = model.clone();
    let planes: Vec<Plane> = images.iter().map(|x| Plane::magnitude(x, model.input_scale)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_params = model.conv1_w.len() + model.conv1_b.len() + model.conv2_w.len() + model.conv2_b.len();
    let mut adam = Adam::new(n_params);
    let mut log = TrainingLog::default();
    let r = cfg.perturbation_budget;

    for step in 0..cfg.outer_steps {
        let mut grads = BackboneGrads::zeros(model.channels);
        let mut objective = 0.0;
        for _ in 0..cfg.batch_size {
            let idx = rng.random_range(0..planes.len());
            let x = planes[idx].crop(cfg.crop, &mut rng);
            let target = run(original.backbone_params(), x.data.clone(), x.width, x.height).output;
            let params = tuned.backbone_params();
            let (delta, _) = pgd(params, &x, &target, r, cfg.inner_pgd_steps, cfg.inner_step_size, &mut rng);
            let input: Vec<f64> = x.data.iter().zip(&delta).map(|(a, d)| a + d).collect();
            let cache = run(params, input, x.width, x.height);
            let (obj, resid) = objective_and_residual(&cache.output, &target);
            objective += obj / cfg.batch_size as f64;
            let grad_out: Vec<f64> = resid.iter().map(|v| 2.0 * v / cfg.batch_size as f64).collect();
            backbone::backward(params, &cache, &grad_out, Some(&mut grads));
        }
        if !objective.is_finite() {
            return Err(SdrError::NumericFailure {
                context: "robust fine-tuning objective".into(),
                iteration: step,
            });
        }
        log.entries.push((step, objective));
        adam.step(
            &mut [&mut tuned.conv1_w, &mut tuned.conv1_b, &mut tuned.conv2_w, &mut tuned.conv2_b],
            &[&grads.conv1_w, &grads.conv1_b, &grads.conv2_w, &grads.conv2_b],
            cfg.outer_learning_rate,
        );
    }
    tuned.validate().map_err(|_| SdrError::NumericFailure {
        context: "robust fine-tuning parameters".into(),
        iteration: cfg.outer_steps,
    })?;
    Ok((tuned, log))
}

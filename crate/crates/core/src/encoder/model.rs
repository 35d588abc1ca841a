use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::backbone::{self, BackboneCache, BackboneParams};
use super::roi::{roi_taps, Tap};
use crate::detect::{BoundingBox, PixelRect};
use crate::error::{invalid, Result};
use crate::mri::ComplexImage;

/// Smoothing constant of the magnitude map `√(re² + im² + ε²)`.
pub const MAGNITUDE_EPS: f64 = 1e-8;

/// Input scale of [`EncoderModel::reference`]: maps the harness image range
/// (99th percentile 50) to roughly unit magnitudes.
pub const REFERENCE_INPUT_SCALE: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderVariant {
    /// Fixed random weights with an orthonormal head; never trained.
    ReferenceFixed,
    Trainable,
}

/// Box-feature encoder: magnitude → conv/tanh → conv/tanh → ROI pooling →
/// bias-free linear head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderModel {
    pub channels: usize,
    pub pool: usize,
    pub feature_dim: usize,
    /// `[C][1][3][3]`
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    /// `[C][C][3][3]`
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
    /// `[D][C·P·P]`, row-major.
    pub head: Vec<f64>,
    pub variant: EncoderVariant,
    pub seed: u64,
    /// The backbone sees `input_scale · |x|`.
    pub input_scale: f64,
}

/// Feature vectors `a_b` for each box `b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxFeatures {
    pub boxes: Vec<BoundingBox>,
    pub vectors: Vec<Vec<f64>>,
}

/// How per-box distances are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// `Σ_b ‖a_b − a'_b‖₂`
    #[default]
    SumOfNorms,
    /// `‖concat_b(a_b − a'_b)‖₂`
    NormOfConcatenation,
}

pub(crate) struct ForwardCache {
    backbone: BackboneCache,
    taps: Vec<Vec<[Tap; 4]>>,
    magnitude: Vec<f64>,
    image: ComplexImage,
}

impl EncoderModel {
    /// Default reference encoder: 8 channels, 7×7 pooling, 64 features.
    pub fn reference(seed: u64) -> Self {
        let mut m = Self::new(8, 7, 64, seed, EncoderVariant::ReferenceFixed).expect("default dimensions are valid");
        m.input_scale = REFERENCE_INPUT_SCALE;
        m
    }

    /// Random initialization. Conv weights are Gaussian with standard
    /// deviation `1.5/√fan_in`; head rows are orthonormalized; input scale 1.
    pub fn new(channels: usize, pool: usize, feature_dim: usize, seed: u64, variant: EncoderVariant) -> Result<Self> {
        let flat = channels * pool * pool;
        if channels == 0 || pool == 0 || feature_dim == 0 {
            return Err(invalid("encoder dimensions must be positive"));
        }
        if feature_dim > flat {
            return Err(invalid(format!(
                "feature_dim {feature_dim} exceeds pooled size {flat}; head rows cannot be orthonormal"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gaussian = |n: usize, std: f64| -> Vec<f64> {
            let d = Normal::new(0.0, std).expect("finite std");
            (0..n).map(|_| d.sample(&mut rng)).collect()
        };
        let conv1_w = gaussian(channels * 9, 1.5 / 3.0);
        let conv1_b = gaussian(channels, 0.1);
        let conv2_w = gaussian(channels * channels * 9, 1.5 / (9.0 * channels as f64).sqrt());
        let conv2_b = gaussian(channels, 0.1);

        let mut head: Vec<f64> = (0..feature_dim * flat)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        for r in 0..feature_dim {
            for q in 0..r {
                let dot: f64 = (0..flat).map(|k| head[r * flat + k] * head[q * flat + k]).sum();
                for k in 0..flat {
                    head[r * flat + k] -= dot * head[q * flat + k];
                }
            }
            let norm: f64 = head[r * flat..(r + 1) * flat].iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in &mut head[r * flat..(r + 1) * flat] {
                *v /= norm;
            }
        }
        Ok(Self {
            channels,
            pool,
            feature_dim,
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            head,
            variant,
            seed,
            input_scale: 1.0,
        })
    }

    pub fn pooled_len(&self) -> usize {
        self.channels * self.pool * self.pool
    }

    pub fn backbone_params(&self) -> BackboneParams<'_> {
        BackboneParams {
            channels: self.channels,
            conv1_w: &self.conv1_w,
            conv1_b: &self.conv1_b,
            conv2_w: &self.conv2_w,
            conv2_b: &self.conv2_b,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels;
        let sizes = [
            (self.conv1_w.len(), c * 9),
            (self.conv1_b.len(), c),
            (self.conv2_w.len(), c * c * 9),
            (self.conv2_b.len(), c),
            (self.head.len(), self.feature_dim * self.pooled_len()),
        ];
        if sizes.iter().any(|(got, want)| got != want) {
            return Err(invalid("encoder parameter arrays have inconsistent sizes"));
        }
        let finite = [&self.conv1_w, &self.conv1_b, &self.conv2_w, &self.conv2_b, &self.head]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(invalid("encoder parameters contain non-finite values"));
        }
        if !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            return Err(invalid("encoder input scale must be positive"));
        }
        Ok(())
    }

    /// Pixels whose values can influence features of `boxes`.
    pub fn receptive_window(&self, boxes: &[BoundingBox], width: usize, height: usize) -> PixelRect {
        let out = boxes
            .iter()
            .map(|b| b.pixel_rect(1, width, height))
            .fold(PixelRect { x0: 0, y0: 0, x1: 0, y1: 0 }, |a, r| a.union(&r));
        out.grow(2, width, height)
    }

    fn head_apply(&self, pooled: &[f64]) -> Vec<f64> {
        let flat = self.pooled_len();
        self.head
            .chunks_exact(flat)
            .map(|row| row.iter().zip(pooled).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub(crate) fn forward(&self, x: &ComplexImage, boxes: &[BoundingBox]) -> Result<(BoxFeatures, ForwardCache)> {
        let (w, h) = (x.width(), x.height());
        if w < 2 || h < 2 {
            return Err(invalid("encoder input must be at least 2x2"));
        }
        let taps = boxes
            .iter()
            .enumerate()
            .map(|(i, b)| {
                roi_taps(b, self.pool, w, h).map_err(|e| invalid(format!("box {i} {b:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let magnitude: Vec<f64> = x
            .data()
            .iter()
            .map(|z| (z.norm_sqr() + MAGNITUDE_EPS * MAGNITUDE_EPS).sqrt())
            .collect();
        let window = boxes
            .iter()
            .map(|b| b.pixel_rect(1, w, h))
            .fold(PixelRect { x0: 0, y0: 0, x1: 0, y1: 0 }, |a, r| a.union(&r));
        let input = magnitude.iter().map(|m| m * self.input_scale).collect();
        let cache = backbone::forward(self.backbone_params(), input, w, h, window);
        let plane = w * h;
        let vectors = taps
            .iter()
            .map(|box_taps| {
                let mut pooled = Vec::with_capacity(self.pooled_len());
                for c in 0..self.channels {
                    let fm = &cache.output[c * plane..(c + 1) * plane];
                    pooled.extend(box_taps.iter().map(|t| t.iter().map(|&(i, wt)| fm[i] * wt).sum::<f64>()));
                }
                self.head_apply(&pooled)
            })
            .collect();
        Ok((
            BoxFeatures {
                boxes: boxes.to_vec(),
                vectors,
            },
            ForwardCache {
                backbone: cache,
                taps,
                magnitude,
                image: x.clone(),
            },
        ))
    }

    /// Image gradient of `Σ_b ⟨grad_b, a_b⟩` (as a complex image whose real
    /// and imaginary parts are the partial derivatives).
    pub(crate) fn backward(&self, cache: &ForwardCache, grad_features: &[Vec<f64>]) -> ComplexImage {
        let (w, h) = (cache.image.width(), cache.image.height());
        let plane = w * h;
        let flat = self.pooled_len();
        let mut grad_fm = vec![0.0; self.channels * plane];
        for (box_taps, g) in cache.taps.iter().zip(grad_features) {
            let mut grad_pooled = vec![0.0; flat];
            for (row, gd) in self.head.chunks_exact(flat).zip(g) {
                if *gd != 0.0 {
                    for (gp, r) in grad_pooled.iter_mut().zip(row) {
                        *gp += r * gd;
                    }
                }
            }
            let pp = self.pool * self.pool;
            for c in 0..self.channels {
                let fm = &mut grad_fm[c * plane..(c + 1) * plane];
                for (t, gp) in box_taps.iter().zip(&grad_pooled[c * pp..(c + 1) * pp]) {
                    for &(i, wt) in t {
                        fm[i] += wt * gp;
                    }
                }
            }
        }
        let grad_mag = backbone::backward(self.backbone_params(), &cache.backbone, &grad_fm, None);
        let data = cache
            .image
            .data()
            .iter()
            .zip(&cache.magnitude)
            .zip(&grad_mag)
            .map(|((z, m), g)| if *g == 0.0 { Complex64::new(0.0, 0.0) } else { z * (g * self.input_scale / m) })
            .collect();
        ComplexImage::from_vec_unchecked(w, h, data)
    }
}

/// `a_b = f(x, b)` for every box.
pub fn encode_boxes(model: &EncoderModel, x: &ComplexImage, boxes: &[BoundingBox]) -> Result<BoxFeatures> {
    model.forward(x, boxes).map(|(f, _)| f)
}

/// Image gradient of `Σ_b ⟨grad_features[b], a_b⟩` (vector-Jacobian product
/// of the encoder); real and imaginary parts hold the partial derivatives.
pub fn feature_vjp(model: &EncoderModel, x: &ComplexImage, boxes: &[BoundingBox], grad_features: &[Vec<f64>]) -> Result<ComplexImage> {
    if grad_features.len() != boxes.len() || grad_features.iter().any(|g| g.len() != model.feature_dim) {
        return Err(invalid("one gradient of length feature_dim is needed per box"));
    }
    let (_, cache) = model.forward(x, boxes)?;
    Ok(model.backward(&cache, grad_features))
}

fn check_pair(a: &BoxFeatures, b: &BoxFeatures) -> Result<()> {
    if a.boxes != b.boxes || a.vectors.len() != b.vectors.len() {
        return Err(invalid("feature sets were computed on different box lists"));
    }
    Ok(())
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Semantic distance `Σ_b ‖a_b − a'_b‖₂`.
pub fn feature_distance(a: &BoxFeatures, b: &BoxFeatures) -> Result<f64> {
    feature_distance_with(a, b, Aggregation::SumOfNorms)
}

pub fn feature_distance_with(a: &BoxFeatures, b: &BoxFeatures, agg: Aggregation) -> Result<f64> {
    check_pair(a, b)?;
    Ok(match agg {
        Aggregation::SumOfNorms => a.vectors.iter().zip(&b.vectors).map(|(u, v)| l2(u, v)).sum(),
        Aggregation::NormOfConcatenation => a
            .vectors
            .iter()
            .zip(&b.vectors)
            .map(|(u, v)| l2(u, v).powi(2))
            .sum::<f64>()
            .sqrt(),
    })
}

/// Value and image gradient of `Σ_j d(x, x_j)`.
#[derive(Clone, Debug)]
pub struct DistanceGradient {
    pub value: f64,
    pub features: BoxFeatures,
    pub gradient: ComplexImage,
}

/// Reverse-mode gradient of `Σ_j d(x_i, x_j)` w.r.t. `x_i`, given the
/// features of the other reconstructions. Box terms at exactly zero distance
/// use the zero subgradient.
pub fn distance_gradient(
    model: &EncoderModel,
    x_i: &ComplexImage,
    others: &[BoxFeatures],
    boxes: &[BoundingBox],
    agg: Aggregation,
) -> Result<DistanceGradient> {
    if others.is_empty() {
        return Err(invalid("distance gradient needs at least one other feature set"));
    }
    let (features, cache) = model.forward(x_i, boxes)?;
    let mut grads = vec![vec![0.0; model.feature_dim]; boxes.len()];
    let mut value = 0.0;
    for other in others {
        check_pair(&features, other)?;
        match agg {
            Aggregation::SumOfNorms => {
                for ((g, a), b) in grads.iter_mut().zip(&features.vectors).zip(&other.vectors) {
                    let d = l2(a, b);
                    value += d;
                    if d > 0.0 {
                        for ((gk, ak), bk) in g.iter_mut().zip(a).zip(b) {
                            *gk += (ak - bk) / d;
                        }
                    }
                }
            }
            Aggregation::NormOfConcatenation => {
                let d = feature_distance_with(&features, other, agg)?;
                value += d;
                if d > 0.0 {
                    for ((g, a), b) in grads.iter_mut().zip(&features.vectors).zip(&other.vectors) {
                        for ((gk, ak), bk) in g.iter_mut().zip(a).zip(b) {
                            *gk += (ak - bk) / d;
                        }
                    }
                }
            }
        }
    }
    let gradient = model.backward(&cache, &grads);
    Ok(DistanceGradient {
        value,
        features,
        gradient,
    })
}

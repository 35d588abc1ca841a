//! Ellipse phantoms with planted lesions.
//!
//! Background ellipses use normalized coordinates in `[-1, 1]` (Shepp–Logan
//! style, intensities add up). Lesions use pixel coordinates so that their
//! ground-truth boxes are exact. The first ellipse defines the body support.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::ComplexImage;
use crate::detect::BoundingBox;
use crate::error::{invalid, Result};

/// Width of the bright annulus of a ring lesion, in pixels.
pub const RING_THICKNESS: f64 = 1.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    /// Center in normalized coordinates.
    pub center: [f64; 2],
    /// Semi-axes in normalized units.
    pub axes: [f64; 2],
    pub angle_deg: f64,
    pub intensity: f64,
}

impl Ellipse {
    fn contains(&self, u: f64, v: f64) -> bool {
        let (s, c) = (self.angle_deg * PI / 180.0).sin_cos();
        let (du, dv) = (u - self.center[0], v - self.center[1]);
        let xr = c * du + s * dv;
        let yr = -s * du + c * dv;
        (xr / self.axes[0]).powi(2) + (yr / self.axes[1]).powi(2) <= 1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LesionShape {
    Disc,
    Ring,
}

impl LesionShape {
    /// Fractional pixel coverage at distance `d` from the lesion center.
    pub fn coverage(self, d: f64, radius: f64) -> f64 {
        let outer = (radius + 0.5 - d).clamp(0.0, 1.0);
        match self {
            LesionShape::Disc => outer,
            LesionShape::Ring => outer.min((d - (radius - RING_THICKNESS) + 0.5).clamp(0.0, 1.0)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lesion {
    pub shape: LesionShape,
    /// Center in pixel coordinates (pixel `i` spans `[i, i+1)`).
    pub center: [f64; 2],
    pub radius: f64,
    /// Additive intensity change before normalization; either sign.
    pub contrast: f64,
    pub class_id: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub ellipses: Vec<Ellipse>,
    pub lesions: Vec<Lesion>,
    /// Relative amplitude of a smooth multiplicative intensity bias.
    #[serde(default)]
    pub bias_amplitude: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub class_id: u32,
}

#[derive(Clone, Debug)]
pub struct Phantom {
    pub image: ComplexImage,
    pub ground_truth: Vec<GroundTruth>,
    /// Body support (inside the first ellipse), row-major.
    pub support: Vec<bool>,
}

fn normalized_coords(x: usize, y: usize, w: usize, h: usize) -> (f64, f64) {
    (
        (x as f64 + 0.5) / w as f64 * 2.0 - 1.0,
        (y as f64 + 0.5) / h as f64 * 2.0 - 1.0,
    )
}

/// Pixels touched by a lesion with their coverage.
fn lesion_footprint(lesion: &Lesion) -> impl Iterator<Item = (i64, i64, f64)> + '_ {
    let reach = (lesion.radius + 1.0).ceil() as i64;
    let (cx, cy) = (lesion.center[0], lesion.center[1]);
    let (x0, y0) = (cx.floor() as i64 - reach, cy.floor() as i64 - reach);
    (y0..=y0 + 2 * reach + 1).flat_map(move |y| {
        (x0..=x0 + 2 * reach + 1).filter_map(move |x| {
            let d = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
            let c = lesion.shape.coverage(d, lesion.radius);
            (c > 0.0).then_some((x, y, c))
        })
    })
}

/// Renders the phantom, returning the image (99th-percentile magnitude scaled
/// to one) and one ground-truth box per lesion.
pub fn make_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    let (w, h) = (spec.width, spec.height);
    if w < 2 || h < 2 {
        return Err(invalid("phantom must be at least 2x2"));
    }
    let mut values = vec![0.0f64; w * h];
    let mut support = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let (u, v) = normalized_coords(x, y, w, h);
            let p = y * w + x;
            for (k, e) in spec.ellipses.iter().enumerate() {
                if e.contains(u, v) {
                    values[p] += e.intensity;
                    if k == 0 {
                        support[p] = true;
                    }
                }
            }
        }
    }

    let mut ground_truth = Vec::with_capacity(spec.lesions.len());
    for (idx, lesion) in spec.lesions.iter().enumerate() {
        if !(lesion.radius > 0.0) || !lesion.contrast.is_finite() {
            return Err(invalid(format!("lesion {idx} has invalid radius or contrast")));
        }
        let (mut xmin, mut ymin, mut xmax, mut ymax) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
        for (x, y, c) in lesion_footprint(lesion) {
            let inside = x >= 0
                && y >= 0
                && (x as usize) < w
                && (y as usize) < h
                && support[y as usize * w + x as usize];
            if !inside {
                return Err(invalid(format!(
                    "lesion {idx} at ({:.1}, {:.1}) extends outside the phantom support",
                    lesion.center[0], lesion.center[1]
                )));
            }
            values[y as usize * w + x as usize] += c * lesion.contrast;
            xmin = xmin.min(x);
            ymin = ymin.min(y);
            xmax = xmax.max(x);
            ymax = ymax.max(y);
        }
        ground_truth.push(GroundTruth {
            bbox: BoundingBox::new(xmin as f64, ymin as f64, (xmax + 1) as f64, (ymax + 1) as f64)?,
            class_id: lesion.class_id,
        });
    }

    if spec.bias_amplitude != 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let fx: f64 = rng.random_range(0.1..0.35);
        let fy: f64 = rng.random_range(0.1..0.35);
        let phase: f64 = rng.random_range(0.0..2.0 * PI);
        for y in 0..h {
            for x in 0..w {
                let (u, v) = normalized_coords(x, y, w, h);
                values[y * w + x] *=
                    1.0 + spec.bias_amplitude * (2.0 * PI * (fx * u + fy * v) + phase).cos();
            }
        }
    }

    let mut sorted: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    sorted.sort_by(f64::total_cmp);
    let p99 = sorted[((sorted.len() - 1) as f64 * 0.99).round() as usize];
    if p99 > 0.0 {
        for v in &mut values {
            *v /= p99;
        }
    }
    let image = ComplexImage::from_vec(
        w,
        h,
        values.into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
    )?;
    Ok(Phantom {
        image,
        ground_truth,
        support,
    })
}

/// Lesion shape rendered on a square patch with a one-pixel background margin.
/// Returned as `(side, row-major coverage)`; the lesion is centered on the
/// middle pixel.
pub fn lesion_patch(shape: LesionShape, radius: f64) -> (usize, Vec<f64>) {
    let half = (radius + 0.5).ceil() as usize + 1;
    let side = 2 * half + 1;
    let c = half as f64 + 0.5;
    let mut out = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let d = ((x as f64 + 0.5 - c).powi(2) + (y as f64 + 0.5 - c).powi(2)).sqrt();
            out.push(shape.coverage(d, radius));
        }
    }
    (side, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn body() -> Vec<Ellipse> {
        vec![Ellipse {
            center: [0.0, 0.0],
            axes: [0.9, 0.9],
            angle_deg: 0.0,
            intensity: 0.5,
        }]
    }

    fn spec(lesions: Vec<Lesion>) -> PhantomSpec {
        PhantomSpec {
            width: 128,
            height: 128,
            ellipses: body(),
            lesions,
            bias_amplitude: 0.05,
            seed: 9,
        }
    }

    #[test]
    fn no_lesions_no_boxes() {
        let p = make_phantom(&spec(vec![])).unwrap();
        assert!(p.ground_truth.is_empty());
    }

    #[test]
    fn disc_box_is_tight() {
        let lesion = Lesion {
            shape: LesionShape::Disc,
            center: [64.5, 64.5],
            radius: 3.0,
            contrast: 0.3,
            class_id: 0,
        };
        let p = make_phantom(&spec(vec![lesion])).unwrap();
        let b = p.ground_truth[0].bbox;
        for (got, want) in [b.x_min, b.y_min, b.x_max, b.y_max].iter().zip([61.0, 61.0, 67.0, 67.0]) {
            assert!((got - want).abs() <= 1.0, "{b:?}");
        }
    }

    #[test]
    fn deterministic() {
        let lesion = Lesion {
            shape: LesionShape::Ring,
            center: [40.0, 70.0],
            radius: 4.0,
            contrast: -0.2,
            class_id: 1,
        };
        let a = make_phantom(&spec(vec![lesion.clone()])).unwrap();
        let b = make_phantom(&spec(vec![lesion])).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.ground_truth, b.ground_truth);
    }

    #[test]
    fn normalized_to_unit_percentile() {
        let p = make_phantom(&spec(vec![])).unwrap();
        let mut m = p.image.magnitude();
        m.sort_by(f64::total_cmp);
        let p99 = m[((m.len() - 1) as f64 * 0.99).round() as usize];
        assert!((p99 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lesion_outside_support_is_rejected() {
        let lesion = Lesion {
            shape: LesionShape::Disc,
            center: [3.0, 3.0],
            radius: 3.0,
            contrast: 0.3,
            class_id: 0,
        };
        assert!(make_phantom(&spec(vec![lesion])).is_err());
    }

    #[test]
    fn patch_has_background_margin() {
        let (side, patch) = lesion_patch(LesionShape::Disc, 3.0);
        assert_eq!(side, 11);
        assert!(patch[..side].iter().all(|&v| v == 0.0));
        assert_eq!(patch[side * (side / 2) + side / 2], 1.0);
    }
}

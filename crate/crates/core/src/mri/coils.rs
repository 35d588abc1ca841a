use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::image::ComplexImage;
use crate::error::{invalid, Result};

/// Per-coil complex sensitivity maps, normalized so that `Σ_c |S_c|² = 1`
/// at every pixel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoilSensitivities {
    pub n_coils: usize,
    pub maps: Vec<ComplexImage>,
}

impl CoilSensitivities {
    /// Single receiver with `S ≡ 1`.
    pub fn single(width: usize, height: usize) -> Self {
        let ones = vec![Complex64::new(1.0, 0.0); width * height];
        Self {
            n_coils: 1,
            maps: vec![ComplexImage::from_vec_unchecked(width, height, ones)],
        }
    }

    /// Smooth Gaussian lobes placed on a ring around the field of view, each
    /// with a gentle linear phase, then normalized pixel-wise.
    pub fn synthetic(width: usize, height: usize, n_coils: usize) -> Result<Self> {
        if n_coils == 0 {
            return Err(invalid("need at least one coil"));
        }
        if n_coils == 1 {
            return Ok(Self::single(width, height));
        }
        let (w, h) = (width as f64, height as f64);
        let sigma = 0.55 * w.max(h);
        let mut maps: Vec<Vec<Complex64>> = Vec::with_capacity(n_coils);
        for c in 0..n_coils {
            let theta = 2.0 * PI * c as f64 / n_coils as f64 + PI / 4.0;
            let (cx, cy) = (0.5 * w + 0.6 * w * theta.cos(), 0.5 * h + 0.6 * h * theta.sin());
            let mut map = Vec::with_capacity(width * height);
            for y in 0..height {
                for x in 0..width {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    let d2 = (px - cx).powi(2) + (py - cy).powi(2);
                    let mag = (-d2 / (2.0 * sigma * sigma)).exp();
                    let phase = 0.7 * c as f64
                        + 0.8 * PI * ((px / w - 0.5) * theta.cos() + (py / h - 0.5) * theta.sin());
                    map.push(Complex64::from_polar(mag, phase));
                }
            }
            maps.push(map);
        }
        for p in 0..width * height {
            let total: f64 = maps.iter().map(|m| m[p].norm_sqr()).sum::<f64>().sqrt();
            for m in &mut maps {
                m[p] /= total;
            }
        }
        Ok(Self {
            n_coils,
            maps: maps
                .into_iter()
                .map(|m| ComplexImage::from_vec_unchecked(width, height, m))
                .collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.maps[0].width()
    }

    pub fn height(&self) -> usize {
        self.maps[0].height()
    }

    pub fn validate(&self) -> Result<()> {
        if self.maps.is_empty() || self.maps.len() != self.n_coils {
            return Err(invalid("coil count does not match number of maps"));
        }
        let first = &self.maps[0];
        for m in &self.maps {
            first.check_shape(m, "coil map")?;
            if !m.is_finite() {
                return Err(invalid("coil map contains non-finite values"));
            }
        }
        Ok(())
    }

    /// Largest deviation of `Σ_c |S_c|²` from one over the given pixels.
    pub fn normalization_error(&self, pixels: impl Iterator<Item = usize>) -> f64 {
        pixels
            .map(|p| {
                let s: f64 = self.maps.iter().map(|m| m.data()[p].norm_sqr()).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_maps_are_normalized_everywhere() {
        let s = CoilSensitivities::synthetic(64, 48, 4).unwrap();
        s.validate().unwrap();
        assert!(s.normalization_error(0..64 * 48) < 1e-12);
    }

    #[test]
    fn maps_differ_between_coils() {
        let s = CoilSensitivities::synthetic(32, 32, 4).unwrap();
        assert!(s.maps[0].distance(&s.maps[1]) > 1.0);
    }
}

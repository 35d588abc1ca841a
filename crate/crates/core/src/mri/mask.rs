//! Cartesian phase-encode undersampling masks.
//!
//! Columns are stored in *centered* order (index `width/2` is the DC column).
//! K-space buffers elsewhere in the crate use the unshifted FFT order, so use
//! [`SamplingMask::fft_columns`] when indexing them.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskKind {
    Equispaced,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingMask {
    pub width: usize,
    /// One flag per phase-encode column, centered order.
    pub sampled_columns: Vec<bool>,
    pub acceleration: f64,
    pub acs_width: usize,
}

impl SamplingMask {
    /// Every column sampled.
    pub fn full(width: usize) -> Self {
        Self {
            width,
            sampled_columns: vec![true; width],
            acceleration: 1.0,
            acs_width: width,
        }
    }

    pub fn n_sampled(&self) -> usize {
        self.sampled_columns.iter().filter(|&&s| s).count()
    }

    /// Whether FFT-order column `k` is sampled.
    #[inline]
    pub fn is_sampled_fft(&self, k: usize) -> bool {
        self.sampled_columns[(k + self.width / 2) % self.width]
    }

    /// Sampled columns as FFT-order indices, ascending.
    pub fn fft_columns(&self) -> Vec<usize> {
        (0..self.width).filter(|&k| self.is_sampled_fft(k)).collect()
    }

    /// Per-column flags in FFT order.
    pub fn fft_flags(&self) -> Vec<bool> {
        (0..self.width).map(|k| self.is_sampled_fft(k)).collect()
    }

    pub(crate) fn acs_range(&self) -> std::ops::Range<usize> {
        let start = self.width / 2 - self.acs_width / 2;
        start..start + self.acs_width
    }

    pub fn validate(&self) -> Result<()> {
        if self.sampled_columns.len() != self.width || self.width == 0 {
            return Err(invalid("mask column count does not match width"));
        }
        if !(self.acceleration >= 1.0) {
            return Err(invalid("mask acceleration must be >= 1"));
        }
        if self.acs_width > self.width || !self.acs_range().all(|c| self.sampled_columns[c]) {
            return Err(invalid("mask ACS columns are not all sampled"));
        }
        Ok(())
    }
}

/// Builds a Cartesian column mask with `round(width / acceleration)` sampled
/// columns, of which the central `round(acs_fraction · width)` form the ACS
/// block. The remaining columns are drawn from the non-ACS columns, either
/// equispaced (with a seeded offset) or uniformly at random.
pub fn make_sampling_mask(
    width: usize,
    acceleration: f64,
    acs_fraction: f64,
    kind: MaskKind,
    seed: u64,
) -> Result<SamplingMask> {
    if width < 2 {
        return Err(invalid("mask width must be at least 2"));
    }
    if !(acceleration >= 1.0) || !acceleration.is_finite() {
        return Err(invalid(format!("acceleration {acceleration} is below 1")));
    }
    if !(acs_fraction > 0.0 && acs_fraction < 1.0) {
        return Err(invalid(format!("acs_fraction {acs_fraction} outside (0, 1)")));
    }
    let target = ((width as f64 / acceleration).round() as usize).clamp(1, width);
    let acs_width = ((acs_fraction * width as f64).round() as usize).clamp(1, target);

    let mut mask = SamplingMask {
        width,
        sampled_columns: vec![false; width],
        acceleration,
        acs_width,
    };
    for c in mask.acs_range() {
        mask.sampled_columns[c] = true;
    }
    let candidates: Vec<usize> = (0..width).filter(|c| !mask.sampled_columns[*c]).collect();
    let remaining = target - acs_width;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        MaskKind::Equispaced => {
            if remaining > 0 {
                let spacing = candidates.len() as f64 / remaining as f64;
                let offset: f64 = rng.random_range(0.0..1.0);
                for k in 0..remaining {
                    let idx = (((k as f64 + offset) * spacing) as usize).min(candidates.len() - 1);
                    mask.sampled_columns[candidates[idx]] = true;
                }
            }
        }
        MaskKind::Random => {
            for idx in sample(&mut rng, candidates.len(), remaining).into_iter() {
                mask.sampled_columns[candidates[idx]] = true;
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acceleration_one_samples_everything() {
        let m = make_sampling_mask(128, 1.0, 0.08, MaskKind::Equispaced, 0).unwrap();
        assert_eq!(m.n_sampled(), 128);
    }

    #[test]
    fn four_x_equispaced_counts() {
        let m = make_sampling_mask(128, 4.0, 0.08, MaskKind::Equispaced, 3).unwrap();
        assert_eq!(m.acs_width, 10);
        assert!((m.n_sampled() as i64 - 32).abs() <= 1);
        assert!(m.acs_range().all(|c| m.sampled_columns[c]));
        m.validate().unwrap();
    }

    #[test]
    fn deterministic_per_seed() {
        for kind in [MaskKind::Equispaced, MaskKind::Random] {
            let a = make_sampling_mask(96, 6.0, 0.08, kind, 11).unwrap();
            let b = make_sampling_mask(96, 6.0, 0.08, kind, 11).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rejects_acceleration_below_one() {
        assert!(make_sampling_mask(64, 0.5, 0.08, MaskKind::Equispaced, 0).is_err());
    }

    #[test]
    fn fft_order_puts_dc_column_first() {
        let m = make_sampling_mask(64, 8.0, 0.08, MaskKind::Random, 1).unwrap();
        assert!(m.is_sampled_fft(0));
        assert!(m.is_sampled_fft(63));
        assert_eq!(m.fft_columns().len(), m.n_sampled());
    }

    #[test]
    fn sampled_fraction_tracks_acceleration() {
        for accel in [2.0, 3.0, 4.0, 6.0, 8.0, 12.0] {
            for kind in [MaskKind::Equispaced, MaskKind::Random] {
                let m = make_sampling_mask(128, accel, 0.08, kind, 5).unwrap();
                let expected = 128.0 / accel;
                assert!((m.n_sampled() as f64 - expected).abs() <= 1.0, "{accel} {kind:?}");
            }
        }
    }
}

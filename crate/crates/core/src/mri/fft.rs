//! Unitary 2-D DFT built from cached 1-D plans.
//!
//! Both directions carry a `1/√(H·W)` factor, so `inverse(forward(x)) == x`
//! and Parseval holds without any extra bookkeeping. Outputs use the standard
//! (unshifted) frequency order: the DC bin sits at index `(0, 0)`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::image::ComplexImage;
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Inverse,
}

type PlanCache = HashMap<(usize, Direction), Arc<dyn Fft<f64>>>;

thread_local! {
    static PLANNER: RefCell<(FftPlanner<f64>, PlanCache)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

pub(crate) fn plan(len: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (planner, cache) = &mut *guard;
        cache
            .entry((len, dir))
            .or_insert_with(|| match dir {
                Direction::Forward => planner.plan_fft_forward(len),
                Direction::Inverse => planner.plan_fft_inverse(len),
            })
            .clone()
    })
}

/// Unnormalized 1-D transforms of every contiguous row of length `width`.
pub(crate) fn fft_rows(buf: &mut [Complex64], width: usize, dir: Direction) {
    plan(width, dir).process(buf);
}

/// Unnormalized 1-D transforms along the columns of a row-major buffer.
pub(crate) fn fft_columns(buf: &mut [Complex64], width: usize, height: usize, dir: Direction) {
    let fft = plan(height, dir);
    let mut column = vec![Complex64::new(0.0, 0.0); height];
    for x in 0..width {
        for (y, c) in column.iter_mut().enumerate() {
            *c = buf[y * width + x];
        }
        fft.process(&mut column);
        for (y, c) in column.iter().enumerate() {
            buf[y * width + x] = *c;
        }
    }
}

/// Same as [`fft_columns`] but only for the listed columns.
pub(crate) fn fft_selected_columns(
    buf: &mut [Complex64],
    width: usize,
    height: usize,
    columns: &[usize],
    dir: Direction,
) {
    let fft = plan(height, dir);
    let mut column = vec![Complex64::new(0.0, 0.0); height];
    for &x in columns {
        for (y, c) in column.iter_mut().enumerate() {
            *c = buf[y * width + x];
        }
        fft.process(&mut column);
        for (y, c) in column.iter().enumerate() {
            buf[y * width + x] = *c;
        }
    }
}

/// Unitary 2-D DFT.
pub fn dft2(img: &ComplexImage, dir: Direction) -> Result<ComplexImage> {
    if img.width() < 2 || img.height() < 2 {
        return Err(invalid(format!(
            "dft2 needs at least 2x2 samples, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let (w, h) = (img.width(), img.height());
    let mut data = img.data().to_vec();
    fft_rows(&mut data, w, dir);
    fft_columns(&mut data, w, h, dir);
    let s = 1.0 / ((w * h) as f64).sqrt();
    for z in &mut data {
        *z *= s;
    }
    Ok(ComplexImage::from_vec_unchecked(w, h, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> ComplexImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        ComplexImage::from_vec(w, h, data).unwrap()
    }

    #[test]
    fn constant_image_has_single_dc_bin() {
        let img = ComplexImage::from_real(4, 4, &[1.0; 16]).unwrap();
        let k = dft2(&img, Direction::Forward).unwrap();
        assert!((k.get(0, 0).norm() - 4.0).abs() < 1e-12);
        let rest: f64 = k.data().iter().skip(1).map(|z| z.norm()).sum();
        assert!(rest < 1e-12);
    }

    #[test]
    fn parseval_and_round_trip() {
        for (seed, (w, h)) in [(16, 16), (32, 8), (5, 7)].into_iter().enumerate() {
            let x = random_image(w, h, seed as u64);
            let k = dft2(&x, Direction::Forward).unwrap();
            assert!((k.norm() - x.norm()).abs() <= 1e-10 * x.norm());
            let back = dft2(&k, Direction::Inverse).unwrap();
            assert!(back.distance(&x) <= 1e-12 * x.norm());
        }
    }

    #[test]
    fn empty_image_is_rejected() {
        let img = ComplexImage::zeros(0, 0);
        assert!(dft2(&img, Direction::Forward).is_err());
    }
}

//! The multicoil encoding operator `A = M·F·S` and its adjoint.
//!
//! Because the mask selects whole phase-encode columns (`kx`), the column
//! transform along `ky` commutes with it. The iterative paths therefore work
//! in the hybrid `(y, kx)` space and only ever run row FFTs; the public
//! [`forward_op`] / [`adjoint_op`] produce and consume full k-space.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::coils::CoilSensitivities;
use super::fft::{fft_rows, fft_selected_columns, Direction};
use super::image::ComplexImage;
use super::mask::SamplingMask;
use crate::error::{invalid, Result};

/// Measured multicoil k-space (unshifted FFT order, zero at unsampled
/// columns) together with everything needed to rebuild the forward model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionData {
    pub kspace: Vec<ComplexImage>,
    pub mask: SamplingMask,
    pub sens: CoilSensitivities,
}

impl AcquisitionData {
    pub fn new(kspace: Vec<ComplexImage>, mask: SamplingMask, sens: CoilSensitivities) -> Result<Self> {
        let acq = Self { kspace, mask, sens };
        acq.validate()?;
        Ok(acq)
    }

    pub fn width(&self) -> usize {
        self.sens.width()
    }

    pub fn height(&self) -> usize {
        self.sens.height()
    }

    pub fn n_coils(&self) -> usize {
        self.sens.n_coils
    }

    pub fn validate(&self) -> Result<()> {
        self.sens.validate()?;
        self.mask.validate()?;
        if self.mask.width != self.width() {
            return Err(invalid("mask width does not match the image grid"));
        }
        check_kspace_shape(&self.kspace, &self.sens)?;
        let flags = self.mask.fft_flags();
        for k in &self.kspace {
            let w = k.width();
            if k.data()
                .iter()
                .enumerate()
                .any(|(i, z)| !flags[i % w] && (z.re != 0.0 || z.im != 0.0))
            {
                return Err(invalid("k-space has non-zero samples on unsampled columns"));
            }
        }
        Ok(())
    }

    pub fn operator(&self) -> EncodingOperator<'_> {
        EncodingOperator::new(self)
    }

    /// `‖y‖₂` over all coils.
    pub fn data_norm(&self) -> f64 {
        self.kspace.iter().map(|k| k.norm_sqr()).sum::<f64>().sqrt()
    }
}

fn check_kspace_shape(kspace: &[ComplexImage], sens: &CoilSensitivities) -> Result<()> {
    if kspace.len() != sens.n_coils {
        return Err(invalid(format!(
            "{} k-space coils but {} sensitivity maps",
            kspace.len(),
            sens.n_coils
        )));
    }
    for k in kspace {
        sens.maps[0].check_shape(k, "k-space")?;
    }
    Ok(())
}

/// Per-coil k-space `M ⊙ F(S_c ⊙ x)`.
pub fn forward_op(x: &ComplexImage, acq: &AcquisitionData) -> Result<Vec<ComplexImage>> {
    apply_forward(x, &acq.sens, &acq.mask)
}

pub(crate) fn apply_forward(
    x: &ComplexImage,
    sens: &CoilSensitivities,
    mask: &SamplingMask,
) -> Result<Vec<ComplexImage>> {
    sens.maps[0].check_shape(x, "forward_op input")?;
    if mask.width != x.width() {
        return Err(invalid("mask width does not match image width"));
    }
    let (w, h) = (x.width(), x.height());
    let columns = mask.fft_columns();
    let flags = mask.fft_flags();
    let scale = 1.0 / ((w * h) as f64).sqrt();
    Ok(sens
        .maps
        .iter()
        .map(|s| {
            let mut buf: Vec<Complex64> = s.data().iter().zip(x.data()).map(|(a, b)| a * b).collect();
            fft_rows(&mut buf, w, Direction::Forward);
            for (i, z) in buf.iter_mut().enumerate() {
                if flags[i % w] {
                    *z *= scale;
                } else {
                    *z = Complex64::new(0.0, 0.0);
                }
            }
            fft_selected_columns(&mut buf, w, h, &columns, Direction::Forward);
            ComplexImage::from_vec_unchecked(w, h, buf)
        })
        .collect())
}

/// `Σ_c conj(S_c) ⊙ F⁻¹(M ⊙ y_c)`.
pub fn adjoint_op(y: &[ComplexImage], acq: &AcquisitionData) -> Result<ComplexImage> {
    check_kspace_shape(y, &acq.sens)?;
    let (w, h) = (acq.width(), acq.height());
    let columns = acq.mask.fft_columns();
    let flags = acq.mask.fft_flags();
    let scale = 1.0 / ((w * h) as f64).sqrt();
    let mut out = vec![Complex64::new(0.0, 0.0); w * h];
    for (yc, s) in y.iter().zip(&acq.sens.maps) {
        let mut buf: Vec<Complex64> = yc
            .data()
            .iter()
            .enumerate()
            .map(|(i, z)| if flags[i % w] { *z * scale } else { Complex64::new(0.0, 0.0) })
            .collect();
        fft_selected_columns(&mut buf, w, h, &columns, Direction::Inverse);
        fft_rows(&mut buf, w, Direction::Inverse);
        for ((o, b), sv) in out.iter_mut().zip(&buf).zip(s.data()) {
            *o += sv.conj() * b;
        }
    }
    Ok(ComplexImage::from_vec_unchecked(w, h, out))
}

/// Simulates `y = A·x + n` with complex Gaussian noise of standard deviation
/// `noise_sigma` per component on the sampled entries.
pub fn simulate_acquisition(
    phantom: &ComplexImage,
    sens: &CoilSensitivities,
    mask: &SamplingMask,
    noise_sigma: f64,
    seed: u64,
) -> Result<AcquisitionData> {
    if !(noise_sigma >= 0.0) {
        return Err(invalid("noise_sigma must be non-negative"));
    }
    sens.validate()?;
    mask.validate()?;
    let mut kspace = apply_forward(phantom, sens, mask)?;
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = phantom.width();
        let flags = mask.fft_flags();
        for k in &mut kspace {
            for (i, z) in k.data_mut().iter_mut().enumerate() {
                if flags[i % w] {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    *z += Complex64::new(re, im) * noise_sigma;
                }
            }
        }
    }
    AcquisitionData::new(kspace, mask.clone(), sens.clone())
}

/// Row-FFT-only view of `A` bound to one acquisition.
///
/// Holds the measured data in hybrid `(y, kx)` space, i.e. `F_y⁻¹ y_c`,
/// restricted to the sampled columns.
pub struct EncodingOperator<'a> {
    sens: &'a CoilSensitivities,
    width: usize,
    height: usize,
    flags: Vec<bool>,
    hybrid: Vec<Vec<Complex64>>,
    data_norm: f64,
}

impl<'a> EncodingOperator<'a> {
    pub fn new(acq: &'a AcquisitionData) -> Self {
        let (w, h) = (acq.width(), acq.height());
        let columns = acq.mask.fft_columns();
        let scale = 1.0 / (h as f64).sqrt();
        let hybrid = acq
            .kspace
            .iter()
            .map(|k| {
                let mut buf = k.data().to_vec();
                fft_selected_columns(&mut buf, w, h, &columns, Direction::Inverse);
                for z in &mut buf {
                    *z *= scale;
                }
                buf
            })
            .collect();
        Self {
            sens: &acq.sens,
            width: w,
            height: h,
            flags: acq.mask.fft_flags(),
            hybrid,
            data_norm: acq.data_norm(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data_norm(&self) -> f64 {
        self.data_norm
    }

    pub(crate) fn check(&self, x: &ComplexImage) -> Result<()> {
        if x.width() != self.width || x.height() != self.height {
            return Err(invalid(format!(
                "image is {}x{} but the acquisition grid is {}x{}",
                x.width(),
                x.height(),
                self.width,
                self.height
            )));
        }
        Ok(())
    }

    /// Unitary row transform of `S_c ⊙ x` into `(y, kx)` space.
    fn coil_hybrid(&self, coil: usize, x: &[Complex64]) -> Vec<Complex64> {
        let s = self.sens.maps[coil].data();
        let mut buf: Vec<Complex64> = s.iter().zip(x).map(|(a, b)| a * b).collect();
        fft_rows(&mut buf, self.width, Direction::Forward);
        let scale = 1.0 / (self.width as f64).sqrt();
        for z in &mut buf {
            *z *= scale;
        }
        buf
    }

    /// Adds `conj(S_c) ⊙ F_x⁻¹(buf)` into `out`; consumes `buf`.
    fn accumulate_coil(&self, coil: usize, mut buf: Vec<Complex64>, out: &mut [Complex64]) {
        fft_rows(&mut buf, self.width, Direction::Inverse);
        let scale = 1.0 / (self.width as f64).sqrt();
        let s = self.sens.maps[coil].data();
        for ((o, b), sv) in out.iter_mut().zip(&buf).zip(s) {
            *o += sv.conj() * b * scale;
        }
    }

    /// `Aᴴ A x`.
    pub fn normal(&self, x: &ComplexImage) -> ComplexImage {
        let w = self.width;
        let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
        for c in 0..self.sens.n_coils {
            let mut buf = self.coil_hybrid(c, x.data());
            for (i, z) in buf.iter_mut().enumerate() {
                if !self.flags[i % w] {
                    *z = Complex64::new(0.0, 0.0);
                }
            }
            self.accumulate_coil(c, buf, &mut out);
        }
        ComplexImage::from_vec_unchecked(self.width, self.height, out)
    }

    /// `Aᴴ y`.
    pub fn adjoint_data(&self) -> ComplexImage {
        let mut out = vec![Complex64::new(0.0, 0.0); self.width * self.height];
        for c in 0..self.sens.n_coils {
            self.accumulate_coil(c, self.hybrid[c].clone(), &mut out);
        }
        ComplexImage::from_vec_unchecked(self.width, self.height, out)
    }

    /// `‖A x − y‖₂`.
    pub fn residual_norm(&self, x: &ComplexImage) -> f64 {
        let w = self.width;
        let mut total = 0.0;
        for c in 0..self.sens.n_coils {
            let buf = self.coil_hybrid(c, x.data());
            total += buf
                .iter()
                .zip(&self.hybrid[c])
                .enumerate()
                .filter(|(i, _)| self.flags[i % w])
                .map(|(_, (a, b))| (a - b).norm_sqr())
                .sum::<f64>();
        }
        total.sqrt()
    }

    /// Overwrites the sampled k-space of every coil image `S_c x` with the
    /// measurement and recombines with `conj(S_c)`.
    pub fn replace_measured(&self, x: &ComplexImage) -> ComplexImage {
        let w = self.width;
        let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
        for c in 0..self.sens.n_coils {
            let mut buf = self.coil_hybrid(c, x.data());
            for (i, (z, m)) in buf.iter_mut().zip(&self.hybrid[c]).enumerate() {
                if self.flags[i % w] {
                    *z = *m;
                }
            }
            self.accumulate_coil(c, buf, &mut out);
        }
        ComplexImage::from_vec_unchecked(self.width, self.height, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mri::fft::dft2;
    use crate::mri::mask::{make_sampling_mask, MaskKind};
    use rand::Rng;

    fn random_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> ComplexImage {
        let data = (0..w * h)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        ComplexImage::from_vec(w, h, data).unwrap()
    }

    fn acquisition(w: usize, h: usize, coils: usize, accel: f64, seed: u64) -> AcquisitionData {
        let sens = CoilSensitivities::synthetic(w, h, coils).unwrap();
        let mask = make_sampling_mask(w, accel, 0.08, MaskKind::Equispaced, seed).unwrap();
        let kspace = vec![ComplexImage::zeros(w, h); coils];
        AcquisitionData::new(kspace, mask, sens).unwrap()
    }

    #[test]
    fn zero_in_zero_out() {
        let acq = acquisition(16, 16, 4, 4.0, 0);
        let k = forward_op(&ComplexImage::zeros(16, 16), &acq).unwrap();
        assert!(k.iter().all(|c| c.norm() == 0.0));
        let x = adjoint_op(&k, &acq).unwrap();
        assert_eq!(x.norm(), 0.0);
    }

    #[test]
    fn single_coil_full_mask_is_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_image(16, 12, &mut rng);
        let acq = AcquisitionData::new(
            vec![ComplexImage::zeros(16, 12)],
            SamplingMask::full(16),
            CoilSensitivities::single(16, 12),
        )
        .unwrap();
        let k = forward_op(&x, &acq).unwrap();
        let d = dft2(&x, Direction::Forward).unwrap();
        assert!(k[0].distance(&d) < 1e-12 * d.norm());
        let back = adjoint_op(&k, &acq).unwrap();
        assert!(back.distance(&x) < 1e-10 * x.norm());
    }

    #[test]
    fn forward_is_zero_on_unsampled_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let acq = acquisition(32, 24, 4, 8.0, 3);
        let k = forward_op(&random_image(32, 24, &mut rng), &acq).unwrap();
        for c in &k {
            for (i, z) in c.data().iter().enumerate() {
                if !acq.mask.is_sampled_fft(i % 32) {
                    assert_eq!(*z, Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn fast_paths_agree_with_full_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut acq = acquisition(32, 32, 3, 4.0, 5);
        let truth = random_image(32, 32, &mut rng);
        acq.kspace = forward_op(&truth, &acq).unwrap();
        let x = random_image(32, 32, &mut rng);
        let op = acq.operator();

        let ax = forward_op(&x, &acq).unwrap();
        let normal_ref = adjoint_op(&ax, &acq).unwrap();
        assert!(op.normal(&x).distance(&normal_ref) < 1e-10 * normal_ref.norm());

        let aty = adjoint_op(&acq.kspace, &acq).unwrap();
        assert!(op.adjoint_data().distance(&aty) < 1e-10 * aty.norm());

        let res_ref: f64 = ax
            .iter()
            .zip(&acq.kspace)
            .map(|(a, b)| a.sub(b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!((op.residual_norm(&x) - res_ref).abs() < 1e-10 * res_ref);
        assert!(op.residual_norm(&truth) < 1e-10);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let acq = acquisition(16, 16, 2, 2.0, 0);
        assert!(forward_op(&ComplexImage::zeros(8, 16), &acq).is_err());
        assert!(adjoint_op(&[ComplexImage::zeros(16, 16)], &acq).is_err());
    }

    #[test]
    fn noiseless_simulation_matches_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_image(16, 16, &mut rng);
        let sens = CoilSensitivities::single(16, 16);
        let acq = simulate_acquisition(&x, &sens, &SamplingMask::full(16), 0.0, 1).unwrap();
        let d = dft2(&x, Direction::Forward).unwrap();
        assert!(acq.kspace[0].distance(&d) < 1e-12 * d.norm());
    }

    #[test]
    fn noisy_simulation_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_image(16, 16, &mut rng);
        let sens = CoilSensitivities::synthetic(16, 16, 2).unwrap();
        let mask = make_sampling_mask(16, 2.0, 0.1, MaskKind::Random, 3).unwrap();
        let a = simulate_acquisition(&x, &sens, &mask, 0.01, 7).unwrap();
        let b = simulate_acquisition(&x, &sens, &mask, 0.01, 7).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
    }
}

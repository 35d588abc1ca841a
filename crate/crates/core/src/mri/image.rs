use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SdrError};

/// Row-major complex image on a `width × height` pixel grid.
///
/// Serialized as `{"width", "height", "data"}` where `data` interleaves the
/// real and imaginary parts of each sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InterleavedImage", into = "InterleavedImage")]
pub struct ComplexImage {
    width: usize,
    height: usize,
    data: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct InterleavedImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl TryFrom<InterleavedImage> for ComplexImage {
    type Error = SdrError;

    fn try_from(raw: InterleavedImage) -> Result<Self> {
        if !raw.data.len().is_multiple_of(2) {
            return Err(invalid("interleaved data has odd length"));
        }
        let data = raw
            .data
            .chunks_exact(2)
            .map(|c| Complex64::new(c[0], c[1]))
            .collect();
        ComplexImage::from_vec(raw.width, raw.height, data)
    }
}

impl From<ComplexImage> for InterleavedImage {
    fn from(img: ComplexImage) -> Self {
        let data = img.data.iter().flat_map(|z| [z.re, z.im]).collect();
        InterleavedImage {
            width: img.width,
            height: img.height,
            data,
        }
    }
}

impl ComplexImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![Complex64::new(0.0, 0.0); width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<Complex64>) -> Result<Self> {
        if width * height != data.len() {
            return Err(invalid(format!(
                "{} samples do not fill a {width}x{height} grid",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid("image contains non-finite samples"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds a real-valued image (zero imaginary part).
    pub fn from_real(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        Self::from_vec(
            width,
            height,
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    pub(crate) fn from_vec_unchecked(width: usize, height: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(width * height, data.len());
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Complex64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: Complex64) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &ComplexImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_shape(&self, other: &ComplexImage, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(invalid(format!(
                "{what}: shape {}x{} does not match {}x{}",
                other.width, other.height, self.width, self.height
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Hermitian inner product `Σ conj(self)·other`.
    pub fn dot(&self, other: &ComplexImage) -> Complex64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Real inner product of the images viewed as vectors in ℝ²ⁿ.
    pub fn real_dot(&self, other: &ComplexImage) -> f64 {
        self.dot(other).re
    }

    pub fn distance(&self, other: &ComplexImage) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for z in &mut self.data {
            *z *= s;
        }
    }

    pub fn scaled(&self, s: f64) -> ComplexImage {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: Complex64, other: &ComplexImage) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn sub(&self, other: &ComplexImage) -> ComplexImage {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        ComplexImage::from_vec_unchecked(self.width, self.height, data)
    }

    pub fn add(&self, other: &ComplexImage) -> ComplexImage {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        ComplexImage::from_vec_unchecked(self.width, self.height, data)
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm()).collect()
    }
}

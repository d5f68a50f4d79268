use num_complex::Complex64;

use crate::error::{Error, Result};

/// A `C × H × W` complex raster stored as separate real and imaginary planes,
/// channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    channels: usize,
    height: usize,
    width: usize,
    pub real: Vec<f64>,
    pub imag: Vec<f64>,
}

impl ComplexField {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        let n = channels * height * width;
        Self {
            channels,
            height,
            width,
            real: vec![0.0; n],
            imag: vec![0.0; n],
        }
    }

    pub fn from_parts(
        channels: usize,
        height: usize,
        width: usize,
        real: Vec<f64>,
        imag: Vec<f64>,
    ) -> Result<Self> {
        let n = channels * height * width;
        if real.len() != n || imag.len() != n {
            return Err(Error::shape(format!(
                "field {channels}x{height}x{width} needs {n} values per plane, got {} real / {} imag",
                real.len(),
                imag.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            real,
            imag,
        })
    }

    pub fn from_complex(
        channels: usize,
        height: usize,
        width: usize,
        values: &[Complex64],
    ) -> Result<Self> {
        let real = values.iter().map(|z| z.re).collect();
        let imag = values.iter().map(|z| z.im).collect();
        Self::from_parts(channels, height, width, real, imag)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(C, H, W)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> Complex64 {
        let i = self.index(c, y, x);
        Complex64::new(self.real[i], self.imag[i])
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, z: Complex64) {
        let i = self.index(c, y, x);
        self.real[i] = z.re;
        self.imag[i] = z.im;
    }

    /// Channel `c` as complex samples.
    pub fn channel(&self, c: usize) -> Vec<Complex64> {
        let len = self.plane_len();
        let range = c * len..(c + 1) * len;
        self.real[range.clone()]
            .iter()
            .zip(&self.imag[range])
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect()
    }

    pub fn set_channel(&mut self, c: usize, values: &[Complex64]) {
        let len = self.plane_len();
        assert_eq!(values.len(), len);
        for (i, z) in values.iter().enumerate() {
            self.real[c * len + i] = z.re;
            self.imag[c * len + i] = z.im;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.real
            .iter()
            .zip(&self.imag)
            .map(|(&re, &im)| Complex64::new(re, im))
    }

    /// `|U|²` per sample.
    pub fn intensity(&self) -> Vec<f64> {
        self.real
            .iter()
            .zip(&self.imag)
            .map(|(re, im)| re * re + im * im)
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.real.iter().chain(&self.imag).all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &ComplexField) -> bool {
        self.dims() == other.dims()
    }

    pub fn ensure_same_shape(&self, other: &ComplexField, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{what}: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )))
        }
    }

    /// `Σ a · conj(b)` over every sample.
    pub fn inner(&self, other: &ComplexField) -> Complex64 {
        self.iter().zip(other.iter()).map(|(a, b)| a * b.conj()).sum()
    }

    /// `Σ |U|²`.
    pub fn energy(&self) -> f64 {
        self.intensity().iter().sum()
    }

    /// Largest `|a − b|` over samples.
    pub fn max_abs_diff(&self, other: &ComplexField) -> f64 {
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn add_assign(&mut self, other: &ComplexField) {
        assert!(self.same_shape(other));
        for (a, b) in self.real.iter_mut().zip(&other.real) {
            *a += b;
        }
        for (a, b) in self.imag.iter_mut().zip(&other.imag) {
            *a += b;
        }
    }

    /// Multiplies channel `c` by `z`.
    pub fn scale_channel(&mut self, c: usize, z: Complex64) {
        let len = self.plane_len();
        for i in c * len..(c + 1) * len {
            let v = Complex64::new(self.real[i], self.imag[i]) * z;
            self.real[i] = v.re;
            self.imag[i] = v.im;
        }
    }
}

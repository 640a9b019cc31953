use num_complex::Complex64;

use crate::error::{Error, Result};

/// Row-major H×W grid of complex samples in the image domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexImage {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl ComplexImage {
    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "grid dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "{height}x{width} grid needs {} samples, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|z| !z.is_finite()) {
            return Err(Error::NonFinite(format!(
                "sample ({}, {}) is {}",
                i / width,
                i % width,
                data[i]
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        Self {
            height,
            width,
            data: vec![Complex64::new(0.0, 0.0); height * width],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> Complex64,
    ) -> Result<Self> {
        let data = (0..height * width).map(|i| f(i / width, i % width)).collect();
        Self::new(height, width, data)
    }

    /// Builds a grid from an owned buffer that is already known to be finite.
    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
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

    pub(crate) fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.is_finite())
    }

    /// Euclidean norm over all samples.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn magnitude(&self) -> RealMap {
        RealMap::from_raw(
            self.height,
            self.width,
            self.data.iter().map(|z| z.norm()).collect(),
        )
    }

    pub fn ensure_shape(&self, expected: (usize, usize)) -> Result<()> {
        if self.shape() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                actual: self.shape(),
            });
        }
        Ok(())
    }

    /// `self - other`, elementwise.
    pub fn sub(&self, other: &ComplexImage) -> Result<ComplexImage> {
        other.ensure_shape(self.shape())?;
        Ok(Self::from_raw(
            self.height,
            self.width,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        ))
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &ComplexImage) -> Result<f64> {
        other.ensure_shape(self.shape())?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

/// Fourier-domain grid with the DC coefficient at `(H/2, W/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KSpace(ComplexImage);

impl KSpace {
    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        ComplexImage::new(height, width, data).map(Self)
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self(ComplexImage::zeros(height, width))
    }

    pub fn from_grid(grid: ComplexImage) -> Self {
        Self(grid)
    }

    pub fn grid(&self) -> &ComplexImage {
        &self.0
    }

    pub fn into_grid(self) -> ComplexImage {
        self.0
    }

    pub(crate) fn grid_mut(&mut self) -> &mut ComplexImage {
        &mut self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn data(&self) -> &[Complex64] {
        self.0.data()
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.0.get(row, col)
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// Row-major real-valued map, e.g. magnitudes or per-pixel variances.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RealMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::invalid(format!(
                "{height}x{width} map cannot hold {} values",
                data.len()
            )));
        }
        Ok(Self::from_raw(height, width, data))
    }

    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<f64>) -> Self {
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

//! Row-major scalar rasters shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the numbers stored in an [`ImageGrid`] mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelSemantics {
    /// Hounsfield units (or raw scanner values before rescale).
    Hu,
    /// Intensities after a normalization stage.
    Normalized,
    /// Integer class labels; only nearest-neighbour resampling applies.
    Label,
}

/// 2D scalar raster, row-major, origin at the top-left pixel.
///
/// Pixel `(row, col)` sits at continuous coordinate `(y, x) = (row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    data: Vec<f64>,
    semantics: PixelSemantics,
}

impl ImageGrid {
    pub fn new(height: usize, width: usize, data: Vec<f64>, semantics: PixelSemantics) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "buffer of {} values does not match {height}x{width}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at index {i}")));
        }
        Ok(Self { height, width, data, semantics })
    }

    pub fn filled(height: usize, width: usize, value: f64, semantics: PixelSemantics) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be positive");
        Self { height, width, data: vec![value; height * width], semantics }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        semantics: PixelSemantics,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { height, width, data, semantics }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn semantics(&self) -> PixelSemantics {
        self.semantics
    }

    pub fn with_semantics(mut self, semantics: PixelSemantics) -> Self {
        self.semantics = semantics;
        self
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    /// Value at `(row, col)` with coordinates clamped to the image border.
    #[inline]
    pub fn get_clamped(&self, row: isize, col: isize) -> f64 {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.data[r * self.width + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
            semantics: self.semantics,
        }
    }

    /// `(min, max)` over all pixels.
    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Distinct values of a label grid, ascending.
    pub fn label_set(&self) -> Vec<i64> {
        let mut labels: Vec<i64> = self.data.iter().map(|v| v.round() as i64).collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }
}

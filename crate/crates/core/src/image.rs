//! Per-pixel grids: input images, ground-truth masks and probability maps.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};

/// Normalized single-channel intensity image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    pixels: Array2<f64>,
}

impl GrayImage {
    pub fn new(pixels: Array2<f64>) -> Result<Self> {
        let (h, w) = pixels.dim();
        if h == 0 || w == 0 {
            return Err(Error::Data("image must be at least 1x1".into()));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { pixels })
    }

    /// Clamps every value into `[0, 1]`; non-finite values become 0.
    pub fn from_clamped(mut pixels: Array2<f64>) -> Result<Self> {
        pixels.mapv_inplace(|v| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 });
        Self::new(pixels)
    }

    pub fn from_u8(height: usize, width: usize, raw: &[u8]) -> Result<Self> {
        let arr = Array2::from_shape_vec((height, width), raw.iter().map(|&v| v as f64 / 255.0).collect())
            .map_err(|e| Error::Data(e.to_string()))?;
        Self::new(arr)
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect()
    }

    pub fn pixels(&self) -> &Array2<f64> {
        &self.pixels
    }

    pub fn shape(&self) -> (usize, usize) {
        self.pixels.dim()
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }
}

/// Ground-truth or predicted hard mask; every pixel is exactly 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMask {
    pixels: Array2<u8>,
}

impl BinaryMask {
    pub fn new(pixels: Array2<u8>) -> Result<Self> {
        if let Some(v) = pixels.iter().find(|v| **v > 1) {
            return Err(Error::Data(format!("mask value {v} is not binary")));
        }
        Ok(Self { pixels })
    }

    pub fn zeros(shape: (usize, usize)) -> Self {
        Self { pixels: Array2::zeros(shape) }
    }

    pub fn from_fn(shape: (usize, usize), mut f: impl FnMut(usize, usize) -> bool) -> Self {
        Self { pixels: Array2::from_shape_fn(shape, |(y, x)| f(y, x) as u8) }
    }

    pub fn pixels(&self) -> &Array2<u8> {
        &self.pixels
    }

    pub fn shape(&self) -> (usize, usize) {
        self.pixels.dim()
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.pixels[[y, x]] == 1
    }

    pub fn set(&mut self, y: usize, x: usize, on: bool) {
        self.pixels[[y, x]] = on as u8;
    }

    pub fn count_ones(&self) -> usize {
        self.pixels.iter().filter(|&&v| v == 1).count()
    }

    pub fn as_f64(&self) -> Array2<f64> {
        self.pixels.mapv(|v| v as f64)
    }
}

/// Per-pixel foreground probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMap {
    pixels: Array2<f64>,
}

impl ProbabilityMap {
    pub fn new(pixels: Array2<f64>) -> Result<Self> {
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("probability {v} outside [0, 1]")));
        }
        Ok(Self { pixels })
    }

    pub fn filled(shape: (usize, usize), value: f64) -> Result<Self> {
        Self::new(Array2::from_elem(shape, value))
    }

    pub fn from_mask(mask: &BinaryMask) -> Self {
        Self { pixels: mask.as_f64() }
    }

    pub fn pixels(&self) -> &Array2<f64> {
        &self.pixels
    }

    pub fn shape(&self) -> (usize, usize) {
        self.pixels.dim()
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Per-pixel arithmetic mean of the two players' maps.
pub fn fuse(o1: &ProbabilityMap, o2: &ProbabilityMap) -> Result<ProbabilityMap> {
    check_shape(o1.shape(), o2.shape())?;
    let mut out = o1.pixels.clone();
    out.zip_mut_with(&o2.pixels, |a, &b| *a = 0.5 * (*a + b));
    Ok(ProbabilityMap { pixels: out })
}

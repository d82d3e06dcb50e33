//! Shared numeric containers and annotation types.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of finite `f64` values.
///
/// Coordinates follow image conventions: `x` is the column index, `y` the row
/// index, origin top-left.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::filled(rows, cols, 0.0)
    }

    /// Builds a matrix from `f(row, col)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::new(rows, cols, data)
    }

    /// Constructor for values the caller already knows to be finite and
    /// correctly sized (results of min/max/affine maps of valid matrices).
    pub(crate) fn from_parts_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Applies `f` elementwise; fails if any result is non-finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Matrix> {
        Matrix::new(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn same_dims(&self, other: &Matrix) -> bool {
        self.dims() == other.dims()
    }
}

/// Axis-aligned ground-truth box, half-open: `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub slice_id: String,
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BoundingBox {
    pub fn new(slice_id: impl Into<String>, x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Self> {
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::InvalidParam(format!(
                "bounding box needs x0 < x1 and y0 < y1, got ({x0},{y0})-({x1},{y1})"
            )));
        }
        Ok(Self {
            slice_id: slice_id.into(),
            x0,
            y0,
            x1,
            y1,
        })
    }

    #[inline]
    pub fn contains(&self, x: u32, y: u32) -> bool {
        self.x0 <= x && x < self.x1 && self.y0 <= y && y < self.y1
    }
}

/// A localized point on one slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub slice_id: String,
    pub x: u32,
    pub y: u32,
    pub score: f64,
}

/// Detector parameters: prominence `h`, value threshold `t`, minimum peak
/// separation `d` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub h: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub d: f64,
}

impl DetectorParams {
    pub fn new(h: f64, t: f64, d: f64) -> Result<Self> {
        let p = Self { h, t, d };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h.is_finite() && self.h >= 0.0) {
            return Err(Error::InvalidParam(format!("h must be >= 0, got {}", self.h)));
        }
        if !self.t.is_finite() {
            return Err(Error::InvalidParam(format!("T must be finite, got {}", self.t)));
        }
        if !(self.d.is_finite() && self.d >= 1.0) {
            return Err(Error::InvalidParam(format!("d must be >= 1, got {}", self.d)));
        }
        Ok(())
    }

    /// Optimum reported for max-pooling activation maps.
    pub const POOLING: DetectorParams = DetectorParams {
        h: 0.024,
        t: 0.76,
        d: 10.0,
    };

    /// Optimum reported for gated-attention weight maps.
    pub const ATTENTION: DetectorParams = DetectorParams {
        h: 0.0038,
        t: 0.024,
        d: 58.0,
    };
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl EvalCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, fp, fn_ }
    }
}

impl std::ops::Add for EvalCounts {
    type Output = EvalCounts;

    fn add(self, rhs: Self) -> Self {
        EvalCounts {
            tp: self.tp + rhs.tp,
            fp: self.fp + rhs.fp,
            fn_: self.fn_ + rhs.fn_,
        }
    }
}

impl std::iter::Sum for EvalCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(EvalCounts::default(), |a, b| a + b)
    }
}

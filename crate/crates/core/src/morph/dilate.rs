use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Matrix;

/// Square neighborhood of side `2 * radius + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Footprint {
    radius: usize,
}

impl Footprint {
    pub const SQUARE_3X3: Footprint = Footprint { radius: 1 };

    pub fn new(radius: usize) -> Result<Self> {
        if radius == 0 {
            return Err(Error::InvalidParam("footprint radius must be >= 1".into()));
        }
        Ok(Self { radius })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }
}

impl Default for Footprint {
    fn default() -> Self {
        Self::SQUARE_3X3
    }
}

/// Maximum filter over the square footprint, clipped at the borders.
///
/// The square window is separable: a row pass followed by a column pass.
pub fn gray_dilate(m: &Matrix, f: Footprint) -> Matrix {
    let (rows, cols) = m.dims();
    let r = f.radius();
    let src = m.as_slice();
    let mut horiz = vec![0.0; rows * cols];
    for y in 0..rows {
        let row = &src[y * cols..(y + 1) * cols];
        for x in 0..cols {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(cols - 1);
            horiz[y * cols + x] = row[lo..=hi].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for y in 0..rows {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(rows - 1);
        for x in 0..cols {
            let mut best = f64::NEG_INFINITY;
            for yy in lo..=hi {
                best = best.max(horiz[yy * cols + x]);
            }
            out[y * cols + x] = best;
        }
    }
    Matrix::from_parts_unchecked(rows, cols, out)
}

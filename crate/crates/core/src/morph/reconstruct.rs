use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::types::Matrix;

const NEIGHBORS: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
// Neighbors visited before `p` in raster order, and after it.
const PRIOR: [(isize, isize); 4] = [(-1, -1), (-1, 0), (-1, 1), (0, -1)];
const LATER: [(isize, isize); 4] = [(1, 1), (1, 0), (1, -1), (0, 1)];

#[inline]
fn offset(y: usize, x: usize, (dy, dx): (isize, isize), rows: usize, cols: usize) -> Option<usize> {
    let ny = y.checked_add_signed(dy)?;
    let nx = x.checked_add_signed(dx)?;
    (ny < rows && nx < cols).then_some(ny * cols + nx)
}

/// Grayscale reconstruction by dilation of `marker` under `mask` with
/// 8-connectivity, computed to the exact fixed point.
///
/// Uses the hybrid raster / anti-raster scan followed by FIFO propagation
/// (Vincent, 1993).
pub fn morph_reconstruct_dilation(marker: &Matrix, mask: &Matrix) -> Result<Matrix> {
    if !marker.same_dims(mask) {
        return Err(Error::Shape(format!(
            "marker {:?} and mask {:?} differ in size",
            marker.dims(),
            mask.dims()
        )));
    }
    if let Some(i) = marker.as_slice().iter().zip(mask.as_slice()).position(|(a, b)| a > b) {
        return Err(Error::Precondition(format!(
            "marker exceeds mask at row {}, col {}",
            i / mask.cols(),
            i % mask.cols()
        )));
    }
    let (rows, cols) = mask.dims();
    let mask = mask.as_slice();
    let mut j = marker.as_slice().to_vec();

    for y in 0..rows {
        for x in 0..cols {
            let p = y * cols + x;
            let mut v = j[p];
            for d in PRIOR {
                if let Some(q) = offset(y, x, d, rows, cols) {
                    v = v.max(j[q]);
                }
            }
            j[p] = v.min(mask[p]);
        }
    }

    let mut queue = VecDeque::new();
    for y in (0..rows).rev() {
        for x in (0..cols).rev() {
            let p = y * cols + x;
            let mut v = j[p];
            for d in LATER {
                if let Some(q) = offset(y, x, d, rows, cols) {
                    v = v.max(j[q]);
                }
            }
            j[p] = v.min(mask[p]);
            let jp = j[p];
            let seeds = LATER.iter().any(|&d| {
                offset(y, x, d, rows, cols).is_some_and(|q| j[q] < jp && j[q] < mask[q])
            });
            if seeds {
                queue.push_back(p);
            }
        }
    }

    while let Some(p) = queue.pop_front() {
        let (y, x) = (p / cols, p % cols);
        let jp = j[p];
        for d in NEIGHBORS {
            if let Some(q) = offset(y, x, d, rows, cols) {
                if j[q] < jp && j[q] != mask[q] {
                    j[q] = jp.min(mask[q]);
                    queue.push_back(q);
                }
            }
        }
    }

    Ok(Matrix::from_parts_unchecked(rows, cols, j))
}

/// Suppresses regional maxima whose prominence is below `h`.
pub fn h_maxima(m: &Matrix, h: f64) -> Result<Matrix> {
    if !(h.is_finite() && h >= 0.0) {
        return Err(Error::InvalidParam(format!("h must be >= 0, got {h}")));
    }
    if h == 0.0 {
        return Ok(m.clone());
    }
    let marker = m.map(|v| v - h)?;
    morph_reconstruct_dilation(&marker, m)
}

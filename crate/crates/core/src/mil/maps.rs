//! Upsampling of per-position weights to image-resolution likelihood maps.

use crate::error::{Error, Result};
use crate::types::Matrix;

use super::EmbeddingBag;

/// Non-negative likelihood map at image resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap(Matrix);

impl AttentionMap {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.min() < 0.0 {
            return Err(Error::InvalidParam("attention maps must be non-negative".into()));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// Source coordinate and interpolation weight for output index `i` under the
/// align-corners convention: output ends map onto input ends.
#[inline]
fn source_coord(i: usize, in_len: usize, out_len: usize) -> (usize, usize, f64) {
    if in_len == 1 || out_len == 1 {
        return (0, 0, 0.0);
    }
    let src = i as f64 * (in_len - 1) as f64 / (out_len - 1) as f64;
    let i0 = (src.floor() as usize).min(in_len - 1);
    let i1 = (i0 + 1).min(in_len - 1);
    (i0, i1, src - i0 as f64)
}

/// Bilinear resize with aligned corners.
pub fn resize_bilinear(m: &Matrix, rows: usize, cols: usize) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::Shape("target dimensions must be positive".into()));
    }
    let xs: Vec<_> = (0..cols).map(|c| source_coord(c, m.cols(), cols)).collect();
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let (r0, r1, fy) = source_coord(r, m.rows(), rows);
        for &(c0, c1, fx) in &xs {
            let top = (1.0 - fx) * m.get(r0, c0) + fx * m.get(r0, c1);
            let bottom = (1.0 - fx) * m.get(r1, c0) + fx * m.get(r1, c1);
            data.push((1.0 - fy) * top + fy * bottom);
        }
    }
    Matrix::new(rows, cols, data)
}

fn check_target(grid: (usize, usize), rows: usize, cols: usize) -> Result<()> {
    if rows < grid.0 || cols < grid.1 {
        return Err(Error::Shape(format!(
            "target {rows}x{cols} is smaller than the {}x{} position grid",
            grid.0, grid.1
        )));
    }
    Ok(())
}

/// Reshapes attention weights onto the bag grid and resizes them to the image.
pub fn attention_map_from_weights(
    a: &[f64],
    grid: (usize, usize),
    rows: usize,
    cols: usize,
) -> Result<AttentionMap> {
    if a.len() != grid.0 * grid.1 {
        return Err(Error::Shape(format!(
            "{} weights do not fill a {}x{} grid",
            a.len(),
            grid.0,
            grid.1
        )));
    }
    check_target(grid, rows, cols)?;
    if a.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidParam("attention weights must be non-negative".into()));
    }
    let g = Matrix::new(grid.0, grid.1, a.to_vec())?;
    AttentionMap::new(resize_bilinear(&g, rows, cols)?)
}

/// Scalar pre-pooling activations, shifted so their minimum is zero, then
/// resized to the image.
pub fn activation_map_from_features(bag: &EmbeddingBag, rows: usize, cols: usize) -> Result<AttentionMap> {
    if bag.dim() != 1 {
        return Err(Error::Shape(format!(
            "activation maps need a scalar feature map (M = 1), got M = {}",
            bag.dim()
        )));
    }
    let grid = bag.grid();
    check_target(grid, rows, cols)?;
    let features = bag.embeddings();
    let min = features.min();
    let shifted = features.as_slice().iter().map(|v| v - min).collect();
    let g = Matrix::new(grid.0, grid.1, shifted)?;
    let resized = resize_bilinear(&g, rows, cols)?;
    // Rounding in the interpolation can produce values like -1e-17.
    AttentionMap::new(resized.map(|v| v.max(0.0))?)
}

//! On-disk layout for bags and trained heads.
//!
//! A bag is `<name>.amap` (K x M) with a sidecar `<name>.json` holding
//! `{grid_rows, grid_cols, label}`. A head is a directory with `w.amap`
//! (L x 1), `V.amap` and `U.amap` (L x M), `theta.amap` (M x 1) and
//! `params.json` holding `{bias}`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, read_matrix, write_json, write_matrix, MatrixFormat};
use crate::types::Matrix;

use super::{AttentionParams, ClassifierHead, EmbeddingBag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BagMeta {
    pub grid_rows: usize,
    pub grid_cols: usize,
    #[serde(default)]
    pub label: Option<u8>,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn save_bag(bag: &EmbeddingBag, label: Option<bool>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_matrix(bag.embeddings(), path, MatrixFormat::Amap)?;
    let (grid_rows, grid_cols) = bag.grid();
    let meta = BagMeta {
        grid_rows,
        grid_cols,
        label: label.map(u8::from),
    };
    write_json(&sidecar(path), &meta)
}

/// Loads `<name>.amap` and its JSON sidecar; returns the bag and its label.
pub fn load_bag(path: impl AsRef<Path>) -> Result<(EmbeddingBag, Option<bool>)> {
    let path = path.as_ref();
    let h = read_matrix(path, MatrixFormat::Amap)?;
    let meta_path = sidecar(path);
    let meta: BagMeta = read_json(&meta_path)?;
    let label = match meta.label {
        None => None,
        Some(0) => Some(false),
        Some(1) => Some(true),
        Some(other) => {
            return Err(Error::format(&meta_path, "label", format!("label must be 0 or 1, got {other}")))
        }
    };
    let bag = EmbeddingBag::new(h, meta.grid_rows, meta.grid_cols)
        .map_err(|e| Error::format(&meta_path, "grid", e.to_string()))?;
    Ok((bag, label))
}

#[derive(Debug, Serialize, Deserialize)]
struct HeadScalars {
    bias: f64,
}

pub fn save_head_params(p: &AttentionParams, head: &ClassifierHead, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (l, m) = (p.hidden(), p.dim());
    write_matrix(&Matrix::new(l, 1, p.w.clone())?, dir.join("w.amap"), MatrixFormat::Amap)?;
    write_matrix(&Matrix::new(l, m, p.v.clone())?, dir.join("V.amap"), MatrixFormat::Amap)?;
    write_matrix(&Matrix::new(l, m, p.u.clone())?, dir.join("U.amap"), MatrixFormat::Amap)?;
    write_matrix(
        &Matrix::new(head.theta.len(), 1, head.theta.clone())?,
        dir.join("theta.amap"),
        MatrixFormat::Amap,
    )?;
    write_json(&dir.join("params.json"), &HeadScalars { bias: head.bias })
}

pub fn load_head_params(dir: impl AsRef<Path>) -> Result<(AttentionParams, ClassifierHead)> {
    let dir = dir.as_ref();
    let w = read_matrix(dir.join("w.amap"), MatrixFormat::Amap)?;
    let v = read_matrix(dir.join("V.amap"), MatrixFormat::Amap)?;
    let u = read_matrix(dir.join("U.amap"), MatrixFormat::Amap)?;
    let theta = read_matrix(dir.join("theta.amap"), MatrixFormat::Amap)?;
    let scalars: HeadScalars = read_json(&dir.join("params.json"))?;
    let shape_err = |e: Error| Error::format(dir, "parameter shapes", e.to_string());
    if w.cols() != 1 || theta.cols() != 1 || v.dims() != u.dims() || v.rows() != w.rows() || theta.rows() != v.cols() {
        return Err(shape_err(Error::Shape(format!(
            "w {:?}, V {:?}, U {:?}, theta {:?}",
            w.dims(),
            v.dims(),
            u.dims(),
            theta.dims()
        ))));
    }
    let p = AttentionParams::new(v.rows(), v.cols(), w.into_vec(), v.into_vec(), u.into_vec()).map_err(shape_err)?;
    let head = ClassifierHead::new(theta.into_vec(), scalars.bias).map_err(shape_err)?;
    Ok((p, head))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bag_and_params_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let bag = EmbeddingBag::new(Matrix::from_fn(6, 2, |r, c| (r * 2 + c) as f64 * 0.1).unwrap(), 2, 3).unwrap();
        let path = dir.path().join("b0.amap");
        save_bag(&bag, Some(true), &path).unwrap();
        let (back, label) = load_bag(&path).unwrap();
        assert_eq!(back, bag);
        assert_eq!(label, Some(true));

        let p = AttentionParams::random(3, 2, 0.5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let head = ClassifierHead::new(vec![0.25, -1.5], 0.125).unwrap();
        save_head_params(&p, &head, dir.path().join("head")).unwrap();
        let (p2, h2) = load_head_params(dir.path().join("head")).unwrap();
        assert_eq!(p2, p);
        assert_eq!(h2, head);
    }
}

//! Deterministic synthetic fixtures: likelihood-map scenes with Gaussian
//! blobs and ground-truth boxes, and MIL bags with planted witness rows.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{write_boxes, write_json, write_matrix, MatrixFormat};
use crate::mil::EmbeddingBag;
use crate::types::{BoundingBox, Matrix};

const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub rows: usize,
    pub cols: usize,
    /// Inclusive range of blobs per scene.
    pub blob_count: (usize, usize),
    pub amplitude: (f64, f64),
    /// Blob standard deviation range, pixels.
    pub sigma: (f64, f64),
    /// Half-range of the uniform background noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            rows: 64,
            cols: 64,
            blob_count: (1, 3),
            amplitude: (0.3, 1.0),
            sigma: (1.5, 3.0),
            noise: 0.02,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if self.rows < 32 || self.cols < 32 {
            return bad(format!("scene dimensions must be >= 32, got {}x{}", self.rows, self.cols));
        }
        if self.blob_count.0 > self.blob_count.1 {
            return bad("blob_count range is reversed".into());
        }
        if !(self.amplitude.0 <= self.amplitude.1 && self.amplitude.0 >= 0.0) {
            return bad("amplitude range must be non-negative and ordered".into());
        }
        if !(self.sigma.0 > 0.0 && self.sigma.0 <= self.sigma.1) {
            return bad("sigma range must be positive and ordered".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be >= 0".into());
        }
        let margin = self.margin();
        if 2 * margin >= self.rows.min(self.cols) {
            return bad(format!("sigma {} leaves no room for blob centres", self.sigma.1));
        }
        Ok(())
    }

    fn margin(&self) -> usize {
        (2.0 * self.sigma.1).ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub slice_id: String,
    pub map: Matrix,
    pub boxes: Vec<BoundingBox>,
}

pub fn scene_id(index: u64) -> String {
    format!("scene_{index:05}")
}

fn scene_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One scene: Gaussian blobs plus uniform noise clamped at zero, with a box
/// of half-width `ceil(3 sigma)` around every blob centre.
pub fn generate_scene(cfg: &SceneConfig, index: u64) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = scene_rng(cfg.seed, index);
    let n = rng.random_range(cfg.blob_count.0..=cfg.blob_count.1);
    let margin = cfg.margin();
    let min_sep = 4.0 * cfg.sigma.1;

    let mut centers: Vec<(usize, usize)> = Vec::with_capacity(n);
    let mut attempts = 0;
    while centers.len() < n {
        if attempts == MAX_PLACEMENT_ATTEMPTS {
            return Err(Error::Placement {
                requested: n,
                attempts,
            });
        }
        attempts += 1;
        let c = (
            rng.random_range(margin..cfg.cols - margin),
            rng.random_range(margin..cfg.rows - margin),
        );
        let clear = centers.iter().all(|&(x, y)| {
            let dx = x as f64 - c.0 as f64;
            let dy = y as f64 - c.1 as f64;
            (dx * dx + dy * dy).sqrt() >= min_sep
        });
        if clear {
            centers.push(c);
        }
    }

    let blobs: Vec<(usize, usize, f64, f64)> = centers
        .into_iter()
        .map(|(x, y)| {
            let amp = rng.random_range(cfg.amplitude.0..=cfg.amplitude.1);
            let sigma = rng.random_range(cfg.sigma.0..=cfg.sigma.1);
            (x, y, amp, sigma)
        })
        .collect();

    let mut data = Vec::with_capacity(cfg.rows * cfg.cols);
    for y in 0..cfg.rows {
        for x in 0..cfg.cols {
            let mut v = 0.0;
            for &(cx, cy, amp, sigma) in &blobs {
                let r2 = (x as f64 - cx as f64).powi(2) + (y as f64 - cy as f64).powi(2);
                v += amp * (-r2 / (2.0 * sigma * sigma)).exp();
            }
            if cfg.noise > 0.0 {
                v += rng.random_range(-cfg.noise..=cfg.noise);
            }
            data.push(v.max(0.0));
        }
    }
    let map = Matrix::new(cfg.rows, cfg.cols, data)?;

    let slice_id = scene_id(index);
    let boxes = blobs
        .iter()
        .map(|&(cx, cy, _, sigma)| {
            let hw = (3.0 * sigma).ceil() as usize;
            BoundingBox::new(
                slice_id.clone(),
                cx.saturating_sub(hw) as u32,
                cy.saturating_sub(hw) as u32,
                (cx + hw + 1).min(cfg.cols) as u32,
                (cy + hw + 1).min(cfg.rows) as u32,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Scene { slice_id, map, boxes })
}

pub fn generate_scenes(cfg: &SceneConfig, indices: impl IntoIterator<Item = u64>) -> Result<Vec<Scene>> {
    indices.into_iter().map(|i| generate_scene(cfg, i)).collect()
}

#[derive(Debug, Serialize)]
struct SceneManifest<'a> {
    config: &'a SceneConfig,
    count: u64,
    slice_ids: Vec<String>,
}

/// Writes `maps/<slice_id>.amap`, `boxes.csv` and `manifest.json` under `dir`.
pub fn write_scene_dir(dir: &Path, cfg: &SceneConfig, count: u64) -> Result<Vec<Scene>> {
    let maps = dir.join("maps");
    std::fs::create_dir_all(&maps).map_err(|e| Error::io(&maps, e))?;
    let scenes = generate_scenes(cfg, 0..count)?;
    for s in &scenes {
        write_matrix(&s.map, maps.join(format!("{}.amap", s.slice_id)), MatrixFormat::Amap)?;
    }
    let boxes: Vec<BoundingBox> = scenes.iter().flat_map(|s| s.boxes.iter().cloned()).collect();
    write_boxes(&boxes, dir.join("boxes.csv"))?;
    let manifest = SceneManifest {
        config: cfg,
        count,
        slice_ids: scenes.iter().map(|s| s.slice_id.clone()).collect(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(scenes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BagConfig {
    /// Positions per bag.
    pub k: usize,
    /// Embedding dimension.
    pub m: usize,
    /// Spatial layout of the positions; `grid.0 * grid.1 == k`.
    pub grid: (usize, usize),
    pub witness_mean: Vec<f64>,
    pub witness_std: f64,
    pub background_mean: Vec<f64>,
    pub background_std: f64,
    /// Inclusive range of witness rows per positive bag.
    pub witnesses: (usize, usize),
    pub seed: u64,
}

impl Default for BagConfig {
    fn default() -> Self {
        Self::with_shape(16, 8, (4, 4))
    }
}

impl BagConfig {
    pub fn with_shape(k: usize, m: usize, grid: (usize, usize)) -> Self {
        Self {
            k,
            m,
            grid,
            witness_mean: vec![1.5; m],
            witness_std: 0.1,
            background_mean: vec![0.0; m],
            background_std: 1.0,
            witnesses: (1, 3),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParam(msg.to_string()));
        if self.k == 0 || self.m == 0 || self.grid.0 * self.grid.1 != self.k {
            return bad("bag shape needs k, m > 0 and grid covering k positions");
        }
        if self.witness_mean.len() != self.m || self.background_mean.len() != self.m {
            return bad("witness and background means need m entries");
        }
        let separated = self
            .witness_mean
            .iter()
            .zip(&self.background_mean)
            .any(|(a, b)| (a - b).abs() >= 1.0);
        if !separated {
            return bad("witness and background means must differ by >= 1 in some coordinate");
        }
        if !(self.witness_std > 0.0 && self.background_std > 0.0) {
            return bad("standard deviations must be > 0");
        }
        if self.witnesses.0 == 0 || self.witnesses.0 > self.witnesses.1 || self.witnesses.1 > self.k {
            return bad("witness count range must lie in 1..=k");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthBag {
    pub bag: EmbeddingBag,
    pub label: bool,
    /// Positions holding witness rows (empty for negative bags).
    pub witnesses: Vec<usize>,
}

/// Witness rows are redrawn until they lie within this distance of the mean.
pub const WITNESS_RADIUS: f64 = 0.5;

/// `n_pos` positive and `n_neg` negative bags in a seed-determined order.
pub fn generate_bags(cfg: &BagConfig, n_pos: usize, n_neg: usize) -> Result<Vec<SynthBag>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bg = Normal::new(0.0, cfg.background_std).map_err(|e| Error::InvalidParam(e.to_string()))?;
    let wn = Normal::new(0.0, cfg.witness_std).map_err(|e| Error::InvalidParam(e.to_string()))?;

    let mut labels: Vec<bool> = std::iter::repeat_n(true, n_pos).chain(std::iter::repeat_n(false, n_neg)).collect();
    labels.shuffle(&mut rng);

    let mut out = Vec::with_capacity(labels.len());
    for label in labels {
        let mut data = Vec::with_capacity(cfg.k * cfg.m);
        for _ in 0..cfg.k {
            data.extend(cfg.background_mean.iter().map(|mu| mu + bg.sample(&mut rng)));
        }
        let mut witnesses = Vec::new();
        if label {
            let count = rng.random_range(cfg.witnesses.0..=cfg.witnesses.1);
            let mut positions: Vec<usize> = (0..cfg.k).collect();
            positions.shuffle(&mut rng);
            witnesses = positions[..count].to_vec();
            witnesses.sort_unstable();
            for &k in &witnesses {
                let row = loop {
                    let noise: Vec<f64> = (0..cfg.m).map(|_| wn.sample(&mut rng)).collect();
                    if noise.iter().map(|e| e * e).sum::<f64>().sqrt() <= WITNESS_RADIUS {
                        break noise;
                    }
                };
                for (j, e) in row.into_iter().enumerate() {
                    data[k * cfg.m + j] = cfg.witness_mean[j] + e;
                }
            }
        }
        let bag = EmbeddingBag::new(Matrix::new(cfg.k, cfg.m, data)?, cfg.grid.0, cfg.grid.1)?;
        out.push(SynthBag { bag, label, witnesses });
    }
    Ok(out)
}

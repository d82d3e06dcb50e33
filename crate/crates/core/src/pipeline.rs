//! Glue between the detector, the metrics and the optimizer: loading map
//! directories, scoring parameter sets over many slices, and splitting
//! scenes into tuning and test sets.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{read_matrix_auto, MatrixFormat};
use crate::metrics::{match_slice, report};
use crate::morph::{detect_slice, DetectorConfig, Footprint};
use crate::synth::Scene;
use crate::types::{BoundingBox, Detection, DetectorParams, EvalCounts, Matrix};

/// Share of scenes used for parameter tuning; the rest is held out.
pub const DEFAULT_TUNING_RATIO: f64 = 0.4;

/// Reads every `.amap`/`.csv` matrix in `dir`, keyed by file stem and sorted
/// by slice id. Other files are ignored.
pub fn load_map_dir(dir: &Path) -> Result<Vec<(String, Matrix)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && MatrixFormat::from_path(&path).is_some() {
            paths.push(path);
        }
    }
    let mut maps = paths
        .par_iter()
        .map(|p| {
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            read_matrix_auto(p).map(|m| (id, m))
        })
        .collect::<Result<Vec<_>>>()?;
    maps.sort_by(|a, b| a.0.cmp(&b.0));
    if let Some(w) = maps.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidParam(format!("slice id {} appears twice in {}", w[0].0, dir.display())));
    }
    Ok(maps)
}

/// Pairs maps with their boxes; slices without boxes get an empty list.
pub fn assemble_scenes(maps: Vec<(String, Matrix)>, boxes: &[BoundingBox]) -> Vec<Scene> {
    let mut by_slice: BTreeMap<&str, Vec<BoundingBox>> = BTreeMap::new();
    for b in boxes {
        by_slice.entry(&b.slice_id).or_default().push(b.clone());
    }
    maps.into_iter()
        .map(|(slice_id, map)| {
            let boxes = by_slice.get(slice_id.as_str()).cloned().unwrap_or_default();
            Scene { slice_id, map, boxes }
        })
        .collect()
}

/// Runs the detector on every map; output is ordered by slice id, then by
/// detection order within a slice.
pub fn detect_all(maps: &[(String, Matrix)], config: &DetectorConfig) -> Result<Vec<Detection>> {
    let per_slice = maps
        .par_iter()
        .map(|(id, m)| detect_slice(m, config, id))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..maps.len()).collect();
    order.sort_by(|&a, &b| maps[a].0.cmp(&maps[b].0));
    Ok(order.into_iter().flat_map(|i| per_slice[i].clone()).collect())
}

/// Detects and matches every scene, summing the counts.
pub fn evaluate_scenes(scenes: &[Scene], config: &DetectorConfig) -> Result<EvalCounts> {
    scenes
        .par_iter()
        .map(|s| {
            let dets = detect_slice(&s.map, config, &s.slice_id)?;
            match_slice(&dets, &s.boxes)
        })
        .try_reduce(EvalCounts::default, |a, b| Ok(a + b))
}

/// Dice over `scenes` for a `[h, T, d]` point; NaN when the point is not a
/// valid parameter set, which the optimizer records as a failed trial.
pub fn dice_objective(scenes: &[Scene], footprint: Footprint) -> impl Fn(&[f64]) -> f64 + '_ {
    move |point| {
        let score = DetectorParams::from_point(point)
            .and_then(|p| evaluate_scenes(scenes, &DetectorConfig::new(p, footprint)));
        match score {
            Ok(counts) => report(counts).dice,
            Err(e) => {
                log::warn!("objective failed at {point:?}: {e}");
                f64::NAN
            }
        }
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Splits `0..n` into (tuning, test) index sets. Indices are ranked by a
/// seeded hash and the first `round(ratio * n)` go to tuning; both halves
/// are returned in ascending order.
pub fn split_indices(n: usize, tuning_ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&tuning_ratio) {
        return Err(Error::InvalidParam(format!("tuning ratio {tuning_ratio} outside [0, 1]")));
    }
    let mut ranked: Vec<usize> = (0..n).collect();
    ranked.sort_by_key(|&i| (mix(seed ^ mix(i as u64)), i));
    let k = (tuning_ratio * n as f64).round() as usize;
    let mut tuning = ranked[..k].to_vec();
    let mut test = ranked[k..].to_vec();
    tuning.sort_unstable();
    test.sort_unstable();
    Ok((tuning, test))
}

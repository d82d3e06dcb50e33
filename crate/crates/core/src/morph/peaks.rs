use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::types::{Detection, DetectorParams, Matrix};

use super::dilate::{gray_dilate, Footprint};
use super::reconstruct::h_maxima;

/// An 8-connected set of local-maximum candidates sharing one value.
#[derive(Debug, Clone, PartialEq)]
pub struct Plateau {
    /// `(x, y)` pixels in row-major discovery order.
    pub pixels: Vec<(usize, usize)>,
    pub value: f64,
}

impl Plateau {
    /// Centroid rounded to the nearest pixel (halves round up).
    pub fn centroid(&self) -> (usize, usize) {
        let n = self.pixels.len() as f64;
        let (sx, sy) = self
            .pixels
            .iter()
            .fold((0usize, 0usize), |(ax, ay), &(x, y)| (ax + x, ay + y));
        ((sx as f64 / n).round() as usize, (sy as f64 / n).round() as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub x: usize,
    pub y: usize,
    pub value: f64,
}

/// Detector parameters plus footprint, as stored in params JSON files:
/// `{h, T, d, footprint_radius}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    #[serde(flatten)]
    pub params: DetectorParams,
    #[serde(default = "default_radius")]
    pub footprint_radius: usize,
}

fn default_radius() -> usize {
    1
}

impl DetectorConfig {
    pub fn new(params: DetectorParams, footprint: Footprint) -> Self {
        Self {
            params,
            footprint_radius: footprint.radius(),
        }
    }

    pub fn footprint(&self) -> Result<Footprint> {
        Footprint::new(self.footprint_radius)
    }
}

/// Pixels equal to the dilated map, grouped into 8-connected components.
///
/// Components are ordered by their first pixel in row-major order. A
/// constant map yields a single component covering every pixel.
pub fn local_maxima(m: &Matrix, f: Footprint) -> Vec<Plateau> {
    let dilated = gray_dilate(m, f);
    let (rows, cols) = m.dims();
    let candidate: Vec<bool> = m
        .as_slice()
        .iter()
        .zip(dilated.as_slice())
        .map(|(a, b)| a == b)
        .collect();
    let mut seen = vec![false; rows * cols];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..rows * cols {
        if !candidate[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(p) = stack.pop() {
            let (y, x) = (p / cols, p % cols);
            pixels.push((x, y));
            for ny in y.saturating_sub(1)..=(y + 1).min(rows - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(cols - 1) {
                    let q = ny * cols + nx;
                    if candidate[q] && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        pixels.sort_by_key(|&(x, y)| (y, x));
        out.push(Plateau {
            pixels,
            value: m.as_slice()[start],
        });
    }
    out
}

/// Full detector: h-maxima, local maxima, threshold `T`, then greedy
/// minimum-distance suppression. Output is sorted by value, descending.
pub fn detect_peaks(map: &Matrix, params: &DetectorParams, f: Footprint) -> Result<Vec<Peak>> {
    params.validate()?;
    let transformed = h_maxima(map, params.h)?;
    let mut candidates: Vec<Peak> = local_maxima(&transformed, f)
        .into_iter()
        .filter(|c| c.value > params.t)
        .map(|c| {
            let (x, y) = c.centroid();
            Peak { x, y, value: c.value }
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.value
            .partial_cmp(&a.value)
            .unwrap_or(Ordering::Equal)
            .then((a.y, a.x).cmp(&(b.y, b.x)))
    });

    let min_sq = params.d * params.d;
    let mut accepted: Vec<Peak> = Vec::new();
    for c in candidates {
        let far = accepted.iter().all(|a| {
            let dx = a.x.abs_diff(c.x) as f64;
            let dy = a.y.abs_diff(c.y) as f64;
            dx * dx + dy * dy >= min_sq
        });
        if far {
            accepted.push(c);
        }
    }
    Ok(accepted)
}

pub fn peaks_to_detections(peaks: &[Peak], slice_id: &str) -> Vec<Detection> {
    peaks
        .iter()
        .map(|p| Detection {
            slice_id: slice_id.to_string(),
            x: p.x as u32,
            y: p.y as u32,
            score: p.value,
        })
        .collect()
}

/// [`detect_peaks`] on one slice, tagged with its id.
pub fn detect_slice(map: &Matrix, config: &DetectorConfig, slice_id: &str) -> Result<Vec<Detection>> {
    let peaks = detect_peaks(map, &config.params, config.footprint()?)?;
    Ok(peaks_to_detections(&peaks, slice_id))
}

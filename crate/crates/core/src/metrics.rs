//! Point-in-box evaluation.
//!
//! A detection inside any box is a true positive (each such detection counts,
//! even when several share a box); a detection inside no box is a false
//! positive; a box containing no detection is a false negative.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{BoundingBox, Detection, EvalCounts};

/// Counts for one slice. All detections and boxes must share one slice id.
pub fn match_slice(detections: &[Detection], boxes: &[BoundingBox]) -> Result<EvalCounts> {
    let id = detections
        .first()
        .map(|d| d.slice_id.as_str())
        .or_else(|| boxes.first().map(|b| b.slice_id.as_str()));
    if let Some(id) = id {
        let mixed = detections.iter().any(|d| d.slice_id != id) || boxes.iter().any(|b| b.slice_id != id);
        if mixed {
            return Err(Error::InvalidParam(format!(
                "match_slice got inputs from more than one slice (expected only {id:?})"
            )));
        }
    }
    Ok(count_matches(detections, boxes))
}

fn count_matches(detections: &[Detection], boxes: &[BoundingBox]) -> EvalCounts {
    let mut hit = vec![false; boxes.len()];
    let mut counts = EvalCounts::default();
    for d in detections {
        let mut inside = false;
        for (b, h) in boxes.iter().zip(hit.iter_mut()) {
            if b.contains(d.x, d.y) {
                inside = true;
                *h = true;
            }
        }
        if inside {
            counts.tp += 1;
        } else {
            counts.fp += 1;
        }
    }
    counts.fn_ = hit.iter().filter(|h| !**h).count() as u64;
    counts
}

pub fn aggregate(counts: &[EvalCounts]) -> EvalCounts {
    counts.iter().copied().sum()
}

/// Groups detections and boxes by slice id and matches each slice. Slices
/// that appear on only one side count with an empty other side. Result is
/// sorted by slice id.
pub fn match_all(detections: &[Detection], boxes: &[BoundingBox]) -> Vec<(String, EvalCounts)> {
    let mut slices: BTreeMap<&str, (Vec<Detection>, Vec<BoundingBox>)> = BTreeMap::new();
    for d in detections {
        slices.entry(&d.slice_id).or_default().0.push(d.clone());
    }
    for b in boxes {
        slices.entry(&b.slice_id).or_default().1.push(b.clone());
    }
    slices
        .into_iter()
        .map(|(id, (d, b))| (id.to_string(), count_matches(&d, &b)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ppv: f64,
    pub se: f64,
    pub dice: f64,
    pub counts: EvalCounts,
    /// Set when some denominator was zero and the metric was reported as 0.
    pub degenerate: bool,
}

fn ratio(num: u64, den: u64, degenerate: &mut bool) -> f64 {
    if den == 0 {
        *degenerate = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn report(counts: EvalCounts) -> MetricsReport {
    let mut degenerate = false;
    let EvalCounts { tp, fp, fn_ } = counts;
    let ppv = ratio(tp, tp + fp, &mut degenerate);
    let se = ratio(tp, tp + fn_, &mut degenerate);
    let dice = ratio(2 * tp, 2 * tp + fp + fn_, &mut degenerate);
    MetricsReport {
        ppv,
        se,
        dice,
        counts,
        degenerate,
    }
}

/// JSON report shape: counts plus percentages rounded to two decimals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub ppv: f64,
    pub se: f64,
    pub dice: f64,
}

fn percent(x: f64) -> f64 {
    (x * 10000.0).round() / 100.0
}

impl From<&MetricsReport> for ReportJson {
    fn from(r: &MetricsReport) -> Self {
        Self {
            tp: r.counts.tp,
            fp: r.counts.fp,
            fn_: r.counts.fn_,
            ppv: percent(r.ppv),
            se: percent(r.se),
            dice: percent(r.dice),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn det(x: u32, y: u32) -> Detection {
        Detection {
            slice_id: "s".into(),
            x,
            y,
            score: 1.0,
        }
    }

    fn bx(x0: u32, y0: u32, x1: u32, y1: u32) -> BoundingBox {
        BoundingBox::new("s", x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn two_hits_in_two_boxes() {
        let c = match_slice(&[det(5, 5), det(25, 25)], &[bx(0, 0, 10, 10), bx(20, 20, 30, 30)]).unwrap();
        assert_eq!(c, EvalCounts::new(2, 0, 0));
    }

    #[test]
    fn isolated_false_positive_and_missed_boxes() {
        let boxes = [bx(0, 0, 5, 5), bx(10, 10, 15, 15), bx(20, 0, 25, 5)];
        let c = match_slice(&[det(40, 40)], &boxes).unwrap();
        assert_eq!(c, EvalCounts::new(0, 1, 3));
    }

    #[test]
    fn empty_slice() {
        assert_eq!(match_slice(&[], &[]).unwrap(), EvalCounts::default());
    }

    #[test]
    fn mixed_slices_rejected() {
        let mut other = det(1, 1);
        other.slice_id = "t".into();
        assert!(match_slice(&[det(1, 1), other], &[]).is_err());
        assert!(match_slice(&[det(1, 1)], &[BoundingBox::new("t", 0, 0, 2, 2).unwrap()]).is_err());
    }

    #[test]
    fn box_edges_are_half_open() {
        let b = [bx(10, 10, 20, 20)];
        assert_eq!(match_slice(&[det(20, 15)], &b).unwrap(), EvalCounts::new(0, 1, 1));
        assert_eq!(match_slice(&[det(10, 19)], &b).unwrap(), EvalCounts::new(1, 0, 0));
    }

    #[test]
    fn overlapping_boxes_share_one_detection() {
        let c = match_slice(&[det(5, 5)], &[bx(0, 0, 10, 10), bx(3, 3, 8, 8)]).unwrap();
        assert_eq!(c, EvalCounts::new(1, 0, 0));
    }

    #[test]
    fn extra_detection_in_hit_box() {
        let b = [bx(0, 0, 10, 10), bx(20, 20, 30, 30)];
        let before = match_slice(&[det(1, 1)], &b).unwrap();
        let after = match_slice(&[det(1, 1), det(2, 2)], &b).unwrap();
        assert_eq!(after.tp, before.tp + 1);
        assert_eq!(after.fn_, before.fn_);
    }

    #[test]
    fn randomized_scenes_match_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..300 {
            let mut boxes: Vec<_> = (0..rng.random_range(0..6))
                .map(|_| {
                    let (x0, y0) = (rng.random_range(0..50), rng.random_range(0..50));
                    bx(x0, y0, x0 + rng.random_range(1..15), y0 + rng.random_range(1..15))
                })
                .collect();
            let mut dets: Vec<_> = (0..rng.random_range(0..8))
                .map(|_| det(rng.random_range(0..64), rng.random_range(0..64)))
                .collect();
            let (mut tp, mut fp) = (0, 0);
            for d in &dets {
                if boxes.iter().any(|b| b.x0 <= d.x && d.x < b.x1 && b.y0 <= d.y && d.y < b.y1) {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
            let fn_ = boxes
                .iter()
                .filter(|b| !dets.iter().any(|d| b.x0 <= d.x && d.x < b.x1 && b.y0 <= d.y && d.y < b.y1))
                .count() as u64;
            let expect = EvalCounts::new(tp, fp, fn_);
            assert_eq!(match_slice(&dets, &boxes).unwrap(), expect);
            dets.shuffle(&mut rng);
            boxes.shuffle(&mut rng);
            assert_eq!(match_slice(&dets, &boxes).unwrap(), expect);
        }
    }

    #[test]
    fn aggregate_sums() {
        assert_eq!(aggregate(&[]), EvalCounts::default());
        let a = [EvalCounts::new(1, 2, 3), EvalCounts::new(4, 5, 6)];
        assert_eq!(aggregate(&a), EvalCounts::new(5, 7, 9));
        assert_eq!(aggregate(&[a[1], a[0]]), EvalCounts::new(5, 7, 9));
    }

    #[test]
    fn report_perfect_and_degenerate() {
        let r = report(EvalCounts::new(1, 0, 0));
        assert_eq!((r.ppv, r.se, r.dice, r.degenerate), (1.0, 1.0, 1.0, false));
        let r = report(EvalCounts::default());
        assert_eq!((r.ppv, r.se, r.dice, r.degenerate), (0.0, 0.0, 0.0, true));
        let r = report(EvalCounts::new(0, 3, 0));
        assert!(r.degenerate && r.dice == 0.0 && r.ppv == 0.0);
    }

    #[test]
    fn dice_is_harmonic_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..1000 {
            let c = EvalCounts::new(rng.random_range(1..500), rng.random_range(0..500), rng.random_range(0..500));
            let r = report(c);
            let hm = 2.0 * r.ppv * r.se / (r.ppv + r.se);
            assert!((r.dice - hm).abs() < 1e-12);
            assert!(r.dice <= r.ppv.max(r.se) + 1e-15 && r.dice >= r.ppv.min(r.se) - 1e-15);
        }
    }

    #[test]
    fn match_all_groups_by_slice() {
        let mut d2 = det(1, 1);
        d2.slice_id = "a".into();
        let per = match_all(&[det(5, 5), d2], &[bx(0, 0, 10, 10)]);
        assert_eq!(per, vec![("a".into(), EvalCounts::new(0, 1, 0)), ("s".into(), EvalCounts::new(1, 0, 0))]);
    }

    #[test]
    fn report_json_shape() {
        let r = report(EvalCounts::new(2, 1, 1));
        let v = serde_json::to_value(ReportJson::from(&r)).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys.len(), 6);
        for k in ["tp", "fp", "fn", "ppv", "se", "dice"] {
            assert!(v.get(k).is_some());
        }
        assert_eq!(v["ppv"], 66.67);
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::acquisition::expected_improvement;
use super::gp::{gp_fit_with, GpFitOptions};
use super::local::compass_search;
use super::sampling::{halton, latin_hypercube_unit};
use super::space::SearchSpace;
use crate::error::{Error, Result};

/// One objective evaluation. `point` is in natural units, already rounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub iteration: usize,
    pub point: Vec<f64>,
    pub objective: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub best: TrialRecord,
    pub history: Vec<TrialRecord>,
}

#[derive(Debug, Clone)]
pub struct BoConfig {
    pub budget: usize,
    pub seed: u64,
    /// Size of the initial Latin hypercube; defaults to `min(10, budget / 3)`.
    pub init_points: Option<usize>,
    pub candidates: usize,
    pub refine_top: usize,
    pub gp_restarts: usize,
}

impl BoConfig {
    pub fn new(budget: usize, seed: u64) -> Self {
        Self {
            budget,
            seed,
            init_points: None,
            candidates: 2048,
            refine_top: 5,
            gp_restarts: 8,
        }
    }

    pub fn initial_design_size(&self) -> usize {
        self.init_points
            .unwrap_or_else(|| (self.budget / 3).min(10))
            .clamp(1, self.budget.max(1))
    }
}

/// Maximizes `objective` over `space` with the default loop settings.
pub fn optimize_detector<F>(objective: F, space: &SearchSpace, budget: usize, seed: u64) -> Result<OptimizationResult>
where
    F: FnMut(&[f64]) -> f64,
{
    optimize_with(objective, space, &BoConfig::new(budget, seed))
}

pub fn optimize_with<F>(mut objective: F, space: &SearchSpace, config: &BoConfig) -> Result<OptimizationResult>
where
    F: FnMut(&[f64]) -> f64,
{
    if config.budget < 5 {
        return Err(Error::InvalidParam(format!("budget must be at least 5, got {}", config.budget)));
    }
    space.validate()?;
    let dims = space.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut history: Vec<TrialRecord> = Vec::with_capacity(config.budget);

    let mut evaluate = |point: Vec<f64>, history: &mut Vec<TrialRecord>| {
        let value = objective(&point);
        let failed = !value.is_finite();
        if failed {
            log::warn!("objective failed at {point:?}");
        }
        history.push(TrialRecord {
            iteration: history.len(),
            point,
            objective: if failed { f64::NEG_INFINITY } else { value },
            failed,
        });
    };

    for u in latin_hypercube_unit(config.initial_design_size(), dims, &mut rng) {
        evaluate(space.from_unit(&u), &mut history);
    }

    while history.len() < config.budget {
        let it = history.len();
        let proposal = propose(space, &history, config, it, &mut rng)?;
        evaluate(proposal, &mut history);
    }

    let best = history
        .iter()
        .fold(None::<&TrialRecord>, |b, t| match b {
            Some(b) if b.objective >= t.objective => Some(b),
            _ => Some(t),
        })
        .cloned()
        .expect("budget >= 5");
    Ok(OptimizationResult { best, history })
}

fn propose(
    space: &SearchSpace,
    history: &[TrialRecord],
    config: &BoConfig,
    iteration: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let dims = space.len();
    let shift: Vec<f64> = (0..dims).map(|_| rng.random()).collect();
    let seen = |p: &[f64]| history.iter().any(|t| t.point == p);

    // Failures enter the surrogate at the worst observed value.
    let worst = history
        .iter()
        .filter(|t| !t.failed)
        .map(|t| t.objective)
        .fold(f64::INFINITY, f64::min);
    let x: Vec<Vec<f64>> = history.iter().map(|t| space.to_unit(&t.point)).collect();
    let distinct = x.iter().skip(1).any(|p| p != &x[0]);
    let candidates = halton(config.candidates, dims, &shift);

    if !worst.is_finite() || !distinct {
        return Ok(first_unseen(space, &candidates, &seen));
    }
    let y: Vec<f64> = history
        .iter()
        .map(|t| if t.failed { worst } else { t.objective })
        .collect();
    let opts = GpFitOptions {
        restarts: config.gp_restarts,
        seed: config.seed ^ (iteration as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        ..Default::default()
    };
    let model = gp_fit_with(&x, &y, &opts)?;
    let best = model.standardize(y.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let ei = |u: &[f64]| {
        let (m, v) = model.predict_standardized(u);
        expected_improvement(m, v, best)
    };

    let mut scored: Vec<(f64, Vec<f64>)> = candidates.into_iter().map(|u| (ei(&u), u)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut refined: Vec<(f64, Vec<f64>)> = scored
        .iter()
        .take(config.refine_top)
        .map(|(_, u)| {
            let (x, neg) = compass_search(|p| -ei(p), u, 0.05, 1e-4, 200);
            (-neg, x)
        })
        .collect();
    refined.append(&mut scored);
    refined.sort_by(|a, b| b.0.total_cmp(&a.0));

    if refined[0].0 <= 0.0 {
        // Flat acquisition: explore where the posterior is least certain.
        refined = refined
            .into_iter()
            .map(|(_, u)| (model.predict_standardized(&u).1, u))
            .collect();
        refined.sort_by(|a, b| b.0.total_cmp(&a.0));
    }
    let pool: Vec<Vec<f64>> = refined.into_iter().map(|(_, u)| u).collect();
    Ok(first_unseen(space, &pool, &seen))
}

/// First candidate whose rounded point has not been evaluated yet; falls back
/// to the first candidate when every one repeats.
fn first_unseen(space: &SearchSpace, pool: &[Vec<f64>], seen: &impl Fn(&[f64]) -> bool) -> Vec<f64> {
    pool.iter()
        .map(|u| space.from_unit(u))
        .find(|p| !seen(p))
        .unwrap_or_else(|| space.from_unit(&pool[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::{Dimension, Scale};

    fn unit_space(dims: usize) -> SearchSpace {
        SearchSpace::new((0..dims).map(|i| Dimension::new(&format!("x{i}"), 0.0, 1.0, Scale::Linear, false)).collect())
            .unwrap()
    }

    #[test]
    fn finds_quadratic_optimum() {
        let space = SearchSpace::detector_default();
        let target = [0.01, 0.1, 40.0];
        let tu = space.to_unit(&target);
        let obj = |p: &[f64]| {
            let u = space.to_unit(p);
            -u.iter().zip(&tu).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        };
        let r = optimize_detector(obj, &space, 40, 1).unwrap();
        let dist = (-r.best.objective).sqrt();
        assert!(dist < 0.05, "distance {dist}");
        assert_eq!(r.history.len(), 40);
    }

    #[test]
    fn budget_equal_to_initial_design() {
        let space = unit_space(2);
        let cfg = BoConfig { init_points: Some(6), ..BoConfig::new(6, 3) };
        let mut calls = 0;
        let r = optimize_with(
            |p| {
                calls += 1;
                p[0] + p[1]
            },
            &space,
            &cfg,
        )
        .unwrap();
        assert_eq!(calls, 6);
        let expected = latin_hypercube_unit(6, 2, &mut ChaCha8Rng::seed_from_u64(3));
        let best = expected.iter().map(|u| u[0] + u[1]).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.best.objective, best);
    }

    #[test]
    fn failures_are_recorded_and_skipped() {
        let space = unit_space(1);
        let r = optimize_detector(
            |p| if p[0] < 0.5 { f64::NAN } else { 1.0 - (p[0] - 0.8).powi(2) },
            &space,
            12,
            0,
        )
        .unwrap();
        assert_eq!(r.history.len(), 12);
        assert!(r.history.iter().any(|t| t.failed && t.objective == f64::NEG_INFINITY));
        assert!(!r.best.failed);
        let max = r.history.iter().map(|t| t.objective).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.best.objective, max);
    }

    #[test]
    fn all_failures_still_fill_budget() {
        let space = unit_space(2);
        let r = optimize_detector(|_| f64::INFINITY, &space, 7, 0).unwrap();
        assert_eq!(r.history.len(), 7);
        assert!(r.history.iter().all(|t| t.failed));
    }

    #[test]
    fn deterministic_and_in_bounds() {
        let space = SearchSpace::detector_default();
        let obj = |p: &[f64]| -(p[0].ln() + 4.0).powi(2) - (p[1] - 0.3).powi(2) - ((p[2] - 20.0) / 50.0).powi(2);
        let a = optimize_detector(obj, &space, 15, 11).unwrap();
        let b = optimize_detector(obj, &space, 15, 11).unwrap();
        assert_eq!(a, b);
        for t in &a.history {
            assert!(space.contains(&t.point), "{:?}", t.point);
        }
    }

    #[test]
    fn small_budget_rejected() {
        assert!(optimize_detector(|_| 0.0, &unit_space(1), 4, 0).is_err());
    }

    #[test]
    fn constant_objective() {
        let r = optimize_detector(|_| 0.5, &unit_space(2), 8, 0).unwrap();
        assert_eq!(r.best.objective, 0.5);
        assert_eq!(r.best.iteration, 0);
    }
}

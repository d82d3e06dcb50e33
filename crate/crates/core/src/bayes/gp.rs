use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::local::nelder_mead;
use crate::error::{Error, Result};

const NOISE_FLOOR: f64 = 1e-10;
const JITTER_CEILING: f64 = 1e-4;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

// Log-space hyperparameter bounds (inputs live in the unit cube, targets are
// standardized).
const LENGTH_BOUNDS: (f64, f64) = (1e-2, 1e1);
const SIGNAL_BOUNDS: (f64, f64) = (1e-2, 1e2);
const NOISE_BOUNDS: (f64, f64) = (NOISE_FLOOR, 1.0);

/// Matérn 5/2 kernel value for a scaled distance `r`.
#[inline]
pub fn matern52(r: f64, signal_var: f64) -> f64 {
    let s = 5f64.sqrt() * r;
    signal_var * (1.0 + s + s * s / 3.0) * (-s).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub length_scales: Vec<f64>,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl GpHyper {
    pub fn isotropic(dims: usize, length: f64, signal_var: f64, noise_var: f64) -> Self {
        Self {
            length_scales: vec![length; dims],
            signal_var,
            noise_var,
        }
    }

    fn to_log(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.length_scales.iter().map(|l| l.ln()).collect();
        t.push(self.signal_var.ln());
        t.push(self.noise_var.ln());
        t
    }

    fn from_log(t: &[f64]) -> Self {
        let d = t.len() - 2;
        Self {
            length_scales: t[..d].iter().map(|v| v.exp()).collect(),
            signal_var: t[d].exp(),
            noise_var: t[d + 1].exp().max(NOISE_FLOOR),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GpFitOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Evaluation cap for each local search.
    pub max_evals: usize,
    /// Skips the likelihood search and uses these hyperparameters.
    pub fixed: Option<GpHyper>,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            seed: 0,
            max_evals: 250,
            fixed: None,
        }
    }
}

/// Fitted GP posterior. Inputs are expected in the unit cube.
#[derive(Debug, Clone)]
pub struct GpModel {
    x: Vec<Vec<f64>>,
    y_std: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    hyper: GpHyper,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    log_marginal_likelihood: f64,
    degenerate: bool,
}

fn kernel_matrix(x: &[Vec<f64>], h: &GpHyper) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = h.signal_var;
        for j in 0..i {
            let v = matern52(scaled_distance(&x[i], &x[j], &h.length_scales), h.signal_var);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

#[inline]
fn scaled_distance(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(ls)
        .map(|((p, q), l)| ((p - q) / l).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Factorizes `K + noise I`, escalating the noise tenfold (up to 1e-4) when
/// the factorization fails. Returns the factor and the noise actually used.
fn factorize(k: &DMatrix<f64>, noise: f64) -> Option<(Cholesky<f64, Dyn>, f64)> {
    let mut noise = noise.max(NOISE_FLOOR);
    loop {
        let mut m = k.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += noise;
        }
        if let Some(c) = Cholesky::new(m) {
            return Some((c, noise));
        }
        if noise >= JITTER_CEILING {
            return None;
        }
        noise = (noise * 10.0).min(JITTER_CEILING);
    }
}

fn log_marginal_likelihood(chol: &Cholesky<f64, Dyn>, alpha: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    -0.5 * y.dot(alpha) - log_det_half - 0.5 * n * LN_2PI
}

fn lml_at(x: &[Vec<f64>], y: &DVector<f64>, h: &GpHyper) -> f64 {
    let k = kernel_matrix(x, h);
    match factorize(&k, h.noise_var) {
        Some((chol, _)) => {
            let alpha = chol.solve(y);
            let v = log_marginal_likelihood(&chol, &alpha, y);
            if v.is_finite() {
                v
            } else {
                f64::NEG_INFINITY
            }
        }
        None => f64::NEG_INFINITY,
    }
}

/// Fits a GP with default options (8 likelihood restarts, seed 0).
pub fn gp_fit(x: &[Vec<f64>], y: &[f64]) -> Result<GpModel> {
    gp_fit_with(x, y, &GpFitOptions::default())
}

pub fn gp_fit_with(x: &[Vec<f64>], y: &[f64], opts: &GpFitOptions) -> Result<GpModel> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} inputs but {} targets", x.len(), y.len())));
    }
    let dims = x.first().map_or(0, |p| p.len());
    if dims == 0 || x.iter().any(|p| p.len() != dims) {
        return Err(Error::Shape("inputs must share a positive dimension".into()));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: i });
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParam("inputs must be finite".into()));
    }
    let distinct = x.iter().skip(1).any(|p| p != &x[0]);
    if !distinct {
        return Err(Error::Precondition("GP fit needs at least 2 distinct points".into()));
    }

    let n = y.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n;
    let degenerate = var.sqrt() <= 1e-12 * y_mean.abs().max(1.0);
    let y_scale = if degenerate { 1.0 } else { var.sqrt() };
    let y_std: Vec<f64> = y.iter().map(|v| if degenerate { 0.0 } else { (v - y_mean) / y_scale }).collect();
    let yv = DVector::from_column_slice(&y_std);

    let default = GpHyper::isotropic(dims, 0.3, 1.0, 1e-6);
    let hyper = if let Some(h) = &opts.fixed {
        if h.length_scales.len() != dims {
            return Err(Error::Shape("fixed length scales do not match input dimension".into()));
        }
        GpHyper {
            noise_var: h.noise_var.max(NOISE_FLOOR),
            ..h.clone()
        }
    } else if degenerate {
        default
    } else {
        fit_hyper(x, &yv, dims, &default, opts)
    };

    let k = kernel_matrix(x, &hyper);
    let (chol, noise) = factorize(&k, hyper.noise_var)
        .ok_or_else(|| Error::Numerical("covariance factorization failed at maximum jitter".into()))?;
    let hyper = GpHyper { noise_var: noise, ..hyper };
    let alpha = chol.solve(&yv);
    let lml = log_marginal_likelihood(&chol, &alpha, &yv);
    Ok(GpModel {
        x: x.to_vec(),
        y_std,
        y_mean,
        y_scale,
        hyper,
        chol,
        alpha,
        log_marginal_likelihood: lml,
        degenerate,
    })
}

fn fit_hyper(x: &[Vec<f64>], y: &DVector<f64>, dims: usize, default: &GpHyper, opts: &GpFitOptions) -> GpHyper {
    let mut lower = vec![LENGTH_BOUNDS.0.ln(); dims];
    let mut upper = vec![LENGTH_BOUNDS.1.ln(); dims];
    lower.extend([SIGNAL_BOUNDS.0.ln(), NOISE_BOUNDS.0.ln()]);
    upper.extend([SIGNAL_BOUNDS.1.ln(), NOISE_BOUNDS.1.ln()]);

    let mut best: Option<(Vec<f64>, f64)> = None;
    for r in 0..opts.restarts.max(1) {
        let start = if r == 0 {
            default.to_log()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(31).wrapping_add(r as u64));
            lower.iter().zip(&upper).map(|(lo, hi)| rng.random_range(*lo..*hi)).collect()
        };
        let (t, v) = nelder_mead(
            |t| -lml_at(x, y, &GpHyper::from_log(t)),
            &start,
            1.0,
            &lower,
            &upper,
            opts.max_evals,
        );
        if v.is_finite() && best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((t, v));
        }
    }
    best.map_or_else(|| default.clone(), |(t, _)| GpHyper::from_log(&t))
}

impl GpModel {
    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    /// True when the targets had zero variance; the model then predicts
    /// their constant value.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn standardized_targets(&self) -> &[f64] {
        &self.y_std
    }

    /// Maps an original-scale objective to the standardized scale.
    pub fn standardize(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_scale
    }

    /// Posterior mean and variance of the latent function on the
    /// standardized target scale.
    pub fn predict_standardized(&self, x: &[f64]) -> (f64, f64) {
        let h = &self.hyper;
        let k = DVector::from_iterator(
            self.x.len(),
            self.x.iter().map(|xi| matern52(scaled_distance(x, xi, &h.length_scales), h.signal_var)),
        );
        let mean = k.dot(&self.alpha);
        let v = self.chol.l_dirty().solve_lower_triangular(&k).unwrap_or_else(|| k.clone());
        let var = (h.signal_var - v.norm_squared()).max(0.0);
        (mean, var)
    }

    /// Posterior mean and variance in original target units.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let (m, v) = self.predict_standardized(x);
        (self.y_mean + self.y_scale * m, v * self.y_scale * self.y_scale)
    }
}

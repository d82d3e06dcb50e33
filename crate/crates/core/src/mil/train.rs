//! Deterministic mini-batch gradient descent with momentum for the gated
//! attention head.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::backward::{backward, loss_for, Gradients};
use super::forward::{classify, Forward};
use super::{AttentionParams, ClassifierHead, EmbeddingBag};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Hidden attention dimension `L`.
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight of the positive term; `None` balances classes as `n_neg / n_pos`.
    pub pos_weight: Option<f64>,
    /// Standard deviation of the initial attention weights.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 8,
            learning_rate: 0.05,
            momentum: 0.9,
            epochs: 40,
            batch_size: 16,
            pos_weight: None,
            init_scale: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: AttentionParams,
    pub head: ClassifierHead,
    /// Average training loss before the first epoch and after every epoch
    /// (`epochs + 1` entries).
    pub loss_history: Vec<f64>,
    pub pos_weight: f64,
}

fn resolve_pos_weight(dataset: &[(EmbeddingBag, bool)], config: &TrainConfig) -> f64 {
    let n_pos = dataset.iter().filter(|(_, y)| *y).count();
    let n_neg = dataset.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        log::warn!("training set holds a single class ({n_pos} positive, {n_neg} negative bags)");
    }
    match config.pos_weight {
        Some(w) => w,
        None if n_pos > 0 && n_neg > 0 => n_neg as f64 / n_pos as f64,
        None => 1.0,
    }
}

fn average_loss(dataset: &[(EmbeddingBag, bool)], p: &AttentionParams, head: &ClassifierHead, pw: f64) -> Result<f64> {
    let mut total = 0.0;
    for (bag, y) in dataset {
        total += loss_for(bag, p, head, *y, pw)?;
    }
    Ok(total / dataset.len() as f64)
}

/// Trains from a seeded random initialization.
pub fn train_mil_head(dataset: &[(EmbeddingBag, bool)], config: &TrainConfig) -> Result<TrainOutcome> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::InvalidParam("training set is empty".into()))?;
    let dim = first.0.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = AttentionParams::random(config.hidden_dim, dim, config.init_scale, &mut rng)?;
    let normal = Normal::new(0.0, config.init_scale / (dim as f64).sqrt())
        .map_err(|e| Error::InvalidParam(e.to_string()))?;
    let theta = (0..dim).map(|_| normal.sample(&mut rng)).collect();
    let head = ClassifierHead::new(theta, 0.0)?;
    train_mil_head_from(params, head, dataset, config)
}

/// Trains starting from the given parameters. Zero epochs returns them
/// unchanged.
pub fn train_mil_head_from(
    mut params: AttentionParams,
    mut head: ClassifierHead,
    dataset: &[(EmbeddingBag, bool)],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::InvalidParam("training set is empty".into()));
    }
    if config.batch_size == 0 || !(config.learning_rate > 0.0) || !(0.0..1.0).contains(&config.momentum) {
        return Err(Error::InvalidParam(
            "training needs batch_size > 0, learning_rate > 0 and momentum in [0, 1)".into(),
        ));
    }
    let pw = resolve_pos_weight(dataset, config);
    if !(pw > 0.0 && pw.is_finite()) {
        return Err(Error::InvalidParam(format!("pos_weight must be > 0, got {pw}")));
    }

    // Shuffling uses its own stream so that the initialization and the
    // visiting order are independent.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut velocity = Gradients::zeros(&params);
    let mut history = Vec::with_capacity(config.epochs + 1);
    history.push(average_loss(dataset, &params, &head, pw)?);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let mut grad = Gradients::zeros(&params);
            for &i in batch {
                let (bag, y) = &dataset[i];
                let (_, g) = backward(bag, &params, &head, *y, pw)?;
                grad.add_scaled(&g, 1.0 / batch.len() as f64);
            }
            let mut step = Gradients::zeros(&params);
            step.add_scaled(&velocity, config.momentum);
            step.add_scaled(&grad, -config.learning_rate);
            velocity = step;
            apply(&mut params, &mut head, &velocity)?;
        }
        history.push(average_loss(dataset, &params, &head, pw)?);
    }

    Ok(TrainOutcome {
        params,
        head,
        loss_history: history,
        pos_weight: pw,
    })
}

fn apply(p: &mut AttentionParams, head: &mut ClassifierHead, step: &Gradients) -> Result<()> {
    let pairs = [
        (&mut p.w, &step.w),
        (&mut p.v, &step.v),
        (&mut p.u, &step.u),
        (&mut head.theta, &step.theta),
    ];
    for (dst, src) in pairs {
        for (d, s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }
    head.bias += step.bias;
    let finite = p.w.iter().chain(&p.v).chain(&p.u).chain(&head.theta).all(|x| x.is_finite())
        && head.bias.is_finite();
    if !finite {
        return Err(Error::Numerical("training diverged to non-finite parameters".into()));
    }
    Ok(())
}

/// Fraction of bags whose thresholded probability (>= 0.5) matches the label.
pub fn bag_accuracy(dataset: &[(EmbeddingBag, bool)], p: &AttentionParams, head: &ClassifierHead) -> Result<f64> {
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for (bag, y) in dataset {
        let fwd = Forward::run(bag, p)?;
        if (classify(&fwd.pooled, head)? >= 0.5) == *y {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

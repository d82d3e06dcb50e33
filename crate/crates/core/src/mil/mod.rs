//! Multiple-instance pooling heads: global max-pooling over a scalar feature
//! map and gated attention pooling over embedding bags, with analytic
//! gradients and a small deterministic training loop.

mod backward;
mod forward;
mod maps;
mod params_io;
mod train;

pub use backward::{backward, loss_for, Gradients};
pub use forward::{
    attention_pool, attention_scores, classify, gated_attention_weights, max_pool_score, sigmoid,
    softmax, weighted_cross_entropy, Forward, PROB_CLAMP,
};
pub use maps::{activation_map_from_features, attention_map_from_weights, resize_bilinear, AttentionMap};
pub use params_io::{load_bag, load_head_params, save_bag, save_head_params, BagMeta};
pub use train::{bag_accuracy, train_mil_head, train_mil_head_from, TrainConfig, TrainOutcome};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::types::Matrix;

/// `K` position-indexed embeddings of dimension `M`, laid out on a
/// `grid_rows x grid_cols` spatial grid in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBag {
    embeddings: Matrix,
    grid_rows: usize,
    grid_cols: usize,
}

impl EmbeddingBag {
    pub fn new(embeddings: Matrix, grid_rows: usize, grid_cols: usize) -> Result<Self> {
        if grid_rows * grid_cols != embeddings.rows() {
            return Err(Error::Shape(format!(
                "grid {grid_rows}x{grid_cols} does not cover {} positions",
                embeddings.rows()
            )));
        }
        Ok(Self {
            embeddings,
            grid_rows,
            grid_cols,
        })
    }

    /// A bag whose positions form a single row.
    pub fn flat(embeddings: Matrix) -> Self {
        let k = embeddings.rows();
        Self {
            embeddings,
            grid_rows: 1,
            grid_cols: k,
        }
    }

    /// Number of positions `K`.
    #[inline]
    pub fn len(&self) -> usize {
        self.embeddings.rows()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Embedding dimension `M`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    #[inline]
    pub fn embedding(&self, k: usize) -> &[f64] {
        self.embeddings.row(k)
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.grid_rows, self.grid_cols)
    }

    /// Reorders positions so that position `k` of the result is position
    /// `perm[k]` of `self`. The result is laid out flat.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::Shape("permutation length differs from bag size".into()));
        }
        let data = perm.iter().flat_map(|&k| self.embedding(k).iter().copied()).collect();
        Ok(Self::flat(Matrix::new(self.len(), self.dim(), data)?))
    }
}

/// Gated attention network parameters: `w` (L), `V` and `U` (L x M, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    hidden: usize,
    dim: usize,
    pub(crate) w: Vec<f64>,
    pub(crate) v: Vec<f64>,
    pub(crate) u: Vec<f64>,
}

impl AttentionParams {
    pub fn new(hidden: usize, dim: usize, w: Vec<f64>, v: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        if hidden == 0 || dim == 0 {
            return Err(Error::Shape("attention dimensions must be positive".into()));
        }
        let n = hidden * dim;
        if w.len() != hidden || v.len() != n || u.len() != hidden * dim {
            return Err(Error::Shape(format!(
                "attention params for L={hidden}, M={dim} need w[{hidden}], V[{n}], U[{n}]; got {}, {}, {}",
                w.len(),
                v.len(),
                u.len()
            )));
        }
        if let Some(index) = w.iter().chain(&v).chain(&u).position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { hidden, dim, w, v, u })
    }

    pub fn zeros(hidden: usize, dim: usize) -> Result<Self> {
        Self::new(hidden, dim, vec![0.0; hidden], vec![0.0; hidden * dim], vec![0.0; hidden * dim])
    }

    /// Entries drawn from `N(0, scale^2)`.
    pub fn random(hidden: usize, dim: usize, scale: f64, rng: &mut impl Rng) -> Result<Self> {
        let normal = Normal::new(0.0, scale).map_err(|e| Error::InvalidParam(e.to_string()))?;
        let mut draw = |n: usize| (0..n).map(|_| normal.sample(rng)).collect::<Vec<f64>>();
        let w = draw(hidden);
        let v = draw(hidden * dim);
        let u = draw(hidden * dim);
        Self::new(hidden, dim, w, v, u)
    }

    /// Hidden attention dimension `L`.
    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }
}

/// Fully connected binary classifier on the pooled representation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    pub(crate) theta: Vec<f64>,
    pub(crate) bias: f64,
}

impl ClassifierHead {
    pub fn new(theta: Vec<f64>, bias: f64) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::Shape("classifier needs at least one weight".into()));
        }
        if let Some(index) = theta.iter().chain(std::iter::once(&bias)).position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { theta, bias })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], 0.0)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }
}

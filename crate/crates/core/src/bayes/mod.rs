//! Gaussian-process Bayesian optimization over a box-bounded search space.
//!
//! The surrogate is a GP with an ARD Matérn 5/2 kernel whose hyperparameters
//! maximize the log marginal likelihood (multi-start Nelder–Mead in log
//! space). Proposals maximize expected improvement over a shifted Halton
//! candidate set, refined by a compass search from the best candidates.

mod acquisition;
mod gp;
mod local;
mod optimize;
mod sampling;
mod space;

pub use acquisition::{expected_improvement, normal_cdf, normal_pdf};
pub use gp::{gp_fit, gp_fit_with, matern52, GpFitOptions, GpHyper, GpModel};
pub use local::{compass_search, nelder_mead};
pub use optimize::{optimize_detector, optimize_with, BoConfig, OptimizationResult, TrialRecord};
pub use sampling::{halton, latin_hypercube, latin_hypercube_unit};
pub use space::{Dimension, Scale, SearchSpace};

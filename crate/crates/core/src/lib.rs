//! Weakly supervised localization from slice-level labels.
//!
//! The crate covers the pieces downstream of a CNN feature extractor:
//!
//! * [`windowing`]: radiological windows and dataset standardization for the
//!   3-channel input.
//! * [`mil`]: max-pooling and gated attention pooling heads, their gradients,
//!   a small training loop, and upsampling of weights to likelihood maps.
//! * [`morph`]: peak detection on likelihood maps by grayscale dilation,
//!   h-maxima filtering, thresholding and minimum-distance suppression.
//! * [`metrics`]: point-in-box matching and Dice / PPV / sensitivity.
//! * [`bayes`]: Gaussian-process Bayesian optimization of detector parameters.
//! * [`synth`]: deterministic synthetic scenes and bags for desk-scale checks.
//! * [`pipeline`]: glue that evaluates detector parameters over a scene set.

pub mod bayes;
pub mod error;
pub mod io;
pub mod metrics;
pub mod mil;
pub mod morph;
pub mod pipeline;
pub mod synth;
pub mod types;
pub mod windowing;

pub use error::{Error, Result};
pub use types::{BoundingBox, Detection, DetectorParams, EvalCounts, Matrix};

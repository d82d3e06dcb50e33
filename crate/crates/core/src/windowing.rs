//! Radiological windowing and dataset standardization for the 3-channel
//! network input: raw slice, brain window, subdural window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Matrix;

/// Linear HU window centred at `level` spanning `width`, clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub level: f64,
    pub width: f64,
}

impl WindowSpec {
    pub const BRAIN: WindowSpec = WindowSpec {
        level: 40.0,
        width: 80.0,
    };
    pub const SUBDURAL: WindowSpec = WindowSpec {
        level: 50.0,
        width: 130.0,
    };

    pub fn new(level: f64, width: f64) -> Result<Self> {
        let w = Self { level, width };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.level.is_finite() || !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::InvalidParam(format!(
                "window needs finite level and width > 0, got L={} W={}",
                self.level, self.width
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn lower(&self) -> f64 {
        self.level - self.width / 2.0
    }

    #[inline]
    pub fn apply_value(&self, v: f64) -> f64 {
        ((v - self.lower()) / self.width).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: f64,
    pub std: f64,
}

impl StandardizationStats {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() || !(std.is_finite() && std > 0.0) {
            return Err(Error::InvalidParam(format!(
                "standardization needs finite mean and std > 0, got mean={mean} std={std}"
            )));
        }
        Ok(Self { mean, std })
    }
}

pub fn apply_window(hu: &Matrix, w: WindowSpec) -> Result<Matrix> {
    w.validate()?;
    hu.map(|v| w.apply_value(v))
}

pub fn standardize(m: &Matrix, stats: StandardizationStats) -> Result<Matrix> {
    if !(stats.std > 0.0) {
        return Err(Error::InvalidParam("std must be > 0".into()));
    }
    m.map(|v| (v - stats.mean) / stats.std)
}

/// Mean and population standard deviation over every pixel of every matrix.
///
/// Uses Welford's streaming update.
pub fn compute_stats<'a>(dataset: impl IntoIterator<Item = &'a Matrix>) -> Result<StandardizationStats> {
    let mut n = 0u64;
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    for m in dataset {
        for &v in m.as_slice() {
            n += 1;
            let delta = v - mean;
            mean += delta / n as f64;
            m2 += delta * (v - mean);
        }
    }
    if n < 2 {
        return Err(Error::Degenerate(format!(
            "need at least 2 values to compute statistics, got {n}"
        )));
    }
    let std = (m2 / n as f64).sqrt();
    if !(std > 0.0) {
        return Err(Error::Degenerate("dataset is constant (std = 0)".into()));
    }
    StandardizationStats::new(mean, std)
}

/// Normalization applied to the three input channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelStats {
    /// One set of statistics shared by all channels.
    Global(StandardizationStats),
    /// Raw, brain, subdural.
    PerChannel([StandardizationStats; 3]),
}

impl ChannelStats {
    fn for_channel(&self, i: usize) -> StandardizationStats {
        match self {
            ChannelStats::Global(s) => *s,
            ChannelStats::PerChannel(s) => s[i],
        }
    }
}

/// Raw, brain-windowed and subdural-windowed slice, each standardized.
pub fn build_input_channels(hu: &Matrix, stats: StandardizationStats) -> Result<[Matrix; 3]> {
    build_input_channels_with(hu, ChannelStats::Global(stats), [WindowSpec::BRAIN, WindowSpec::SUBDURAL])
}

pub fn build_input_channels_with(
    hu: &Matrix,
    stats: ChannelStats,
    windows: [WindowSpec; 2],
) -> Result<[Matrix; 3]> {
    let [raw, a, b] = unnormalized_channels(hu, windows)?;
    Ok([
        standardize(&raw, stats.for_channel(0))?,
        standardize(&a, stats.for_channel(1))?,
        standardize(&b, stats.for_channel(2))?,
    ])
}

/// Raw slice plus the two windowed versions, before standardization.
pub fn unnormalized_channels(hu: &Matrix, windows: [WindowSpec; 2]) -> Result<[Matrix; 3]> {
    Ok([
        hu.clone(),
        apply_window(hu, windows[0])?,
        apply_window(hu, windows[1])?,
    ])
}

/// Per-channel statistics over a dataset of HU slices.
pub fn compute_channel_stats(dataset: &[Matrix], windows: [WindowSpec; 2]) -> Result<[StandardizationStats; 3]> {
    let channels = dataset
        .iter()
        .map(|m| unnormalized_channels(m, windows))
        .collect::<Result<Vec<_>>>()?;
    Ok([
        compute_stats(channels.iter().map(|c| &c[0]))?,
        compute_stats(channels.iter().map(|c| &c[1]))?,
        compute_stats(channels.iter().map(|c| &c[2]))?,
    ])
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::DetectorParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
    #[serde(default)]
    pub integer: bool,
}

impl Dimension {
    pub fn new(name: &str, lower: f64, upper: f64, scale: Scale, integer: bool) -> Self {
        Self {
            name: name.to_string(),
            lower,
            upper,
            scale,
            integer,
        }
    }

    fn to_unit(&self, v: f64) -> f64 {
        let u = match self.scale {
            Scale::Linear => (v - self.lower) / (self.upper - self.lower),
            Scale::Log => (v.ln() - self.lower.ln()) / (self.upper.ln() - self.lower.ln()),
        };
        u.clamp(0.0, 1.0)
    }

    fn from_unit(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let v = match self.scale {
            Scale::Linear => self.lower + u * (self.upper - self.lower),
            Scale::Log if u == 0.0 => self.lower,
            Scale::Log if u == 1.0 => self.upper,
            Scale::Log => (self.lower.ln() + u * (self.upper.ln() - self.lower.ln())).exp(),
        };
        self.snap(v)
    }

    /// Clamps into bounds and rounds integer dimensions.
    fn snap(&self, v: f64) -> f64 {
        let v = v.clamp(self.lower, self.upper);
        if self.integer {
            v.round().clamp(self.lower.ceil(), self.upper.floor())
        } else {
            v
        }
    }
}

/// Box-bounded space; points are in natural units, ordered as `dims`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        let s = Self { dims };
        s.validate()?;
        Ok(s)
    }

    /// `h` in `[1e-4, 0.5]` and `T` in `[1e-4, 1]`, both log-scaled; `d` in
    /// `[1, 100]` pixels, integer.
    pub fn detector_default() -> Self {
        Self {
            dims: vec![
                Dimension::new("h", 1e-4, 0.5, Scale::Log, false),
                Dimension::new("T", 1e-4, 1.0, Scale::Log, false),
                Dimension::new("d", 1.0, 100.0, Scale::Linear, true),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::InvalidParam("search space has no dimensions".into()));
        }
        for d in &self.dims {
            if !(d.lower.is_finite() && d.upper.is_finite() && d.lower < d.upper) {
                return Err(Error::InvalidParam(format!("dimension {} needs lower < upper", d.name)));
            }
            if d.scale == Scale::Log && d.lower <= 0.0 {
                return Err(Error::InvalidParam(format!("log dimension {} needs lower > 0", d.name)));
            }
            if d.integer && d.lower.ceil() > d.upper.floor() {
                return Err(Error::InvalidParam(format!("integer dimension {} holds no integer", d.name)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn to_unit(&self, point: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(point).map(|(d, &v)| d.to_unit(v)).collect()
    }

    /// Maps a unit-cube point to natural units, rounding integer dimensions.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(u).map(|(d, &x)| d.from_unit(x)).collect()
    }

    pub fn snap(&self, point: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(point).map(|(d, &v)| d.snap(v)).collect()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dims.len()
            && self.dims.iter().zip(point).all(|(d, &v)| {
                d.lower <= v && v <= d.upper && (!d.integer || v.fract() == 0.0)
            })
    }
}

impl DetectorParams {
    /// Interprets a `[h, T, d]` point.
    pub fn from_point(point: &[f64]) -> Result<Self> {
        match point {
            [h, t, d] => DetectorParams::new(*h, *t, *d),
            _ => Err(Error::Shape(format!("detector point needs 3 values, got {}", point.len()))),
        }
    }

    pub fn to_point(&self) -> [f64; 3] {
        [self.h, self.t, self.d]
    }
}

//! Separable spatio-temporal correlation kernels and the age-equivalent
//! distance (AeD) transform.
//!
//! A kernel is the product `sigma2 * g(dt) * h(a, b)` of a temporal
//! correlation `g` and a spatial correlation `h`, both normalized to 1 at
//! zero separation. The AeD maps spatial separation into the time domain via
//! the defining identity `g(delta + aed) = g(delta) * h(a, b)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Temporal correlation family, `g(0) = 1`, strictly decreasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TemporalFamily {
    Exponential,
    SquaredExponential,
    RationalQuadratic { beta: f64 },
}

/// Spatial correlation family, `h(x, x) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SpatialFamily {
    Exponential,
    SquaredExponential,
    RationalQuadratic { alpha: f64 },
}

/// Spatial length scale; `Infinite` is the exact spatially flat limit `h == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LengthScale {
    Finite(f64),
    Infinite,
}

impl LengthScale {
    pub fn is_infinite(&self) -> bool {
        matches!(self, LengthScale::Infinite)
    }
}

/// A separable product kernel `sigma2 * g(dt) * h(dx)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub sigma2: f64,
    pub l_t: f64,
    pub l_s: LengthScale,
    pub temporal: TemporalFamily,
    pub spatial: SpatialFamily,
}

impl Kernel {
    pub fn new(
        sigma2: f64,
        l_t: f64,
        l_s: LengthScale,
        temporal: TemporalFamily,
        spatial: SpatialFamily,
    ) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Config(format!("sigma2 must be > 0, got {sigma2}")));
        }
        if !(l_t > 0.0 && l_t.is_finite()) {
            return Err(Error::Config(format!("l_t must be > 0, got {l_t}")));
        }
        if let LengthScale::Finite(ls) = l_s {
            if !(ls > 0.0 && ls.is_finite()) {
                return Err(Error::Config(format!("l_s must be > 0, got {ls}")));
            }
        }
        if let TemporalFamily::RationalQuadratic { beta } = temporal {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(Error::Config(format!("beta must be > 0, got {beta}")));
            }
        }
        if let SpatialFamily::RationalQuadratic { alpha } = spatial {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::Config(format!("alpha must be > 0, got {alpha}")));
            }
        }
        Ok(Kernel { sigma2, l_t, l_s, temporal, spatial })
    }

    pub fn exponential(sigma2: f64, l_t: f64, l_s: LengthScale) -> Result<Self> {
        Self::new(sigma2, l_t, l_s, TemporalFamily::Exponential, SpatialFamily::Exponential)
    }

    pub fn squared_exponential(sigma2: f64, l_t: f64, l_s: LengthScale) -> Result<Self> {
        Self::new(
            sigma2,
            l_t,
            l_s,
            TemporalFamily::SquaredExponential,
            SpatialFamily::SquaredExponential,
        )
    }

    pub fn rational_quadratic(
        sigma2: f64,
        l_t: f64,
        l_s: LengthScale,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        Self::new(
            sigma2,
            l_t,
            l_s,
            TemporalFamily::RationalQuadratic { beta },
            SpatialFamily::RationalQuadratic { alpha },
        )
    }

    /// Temporal correlation `g(delta)`.
    pub fn g_temporal(&self, delta: f64) -> Result<f64> {
        if !(delta >= 0.0) {
            return Err(Error::Domain(format!("temporal separation must be >= 0, got {delta}")));
        }
        Ok(self.g_unchecked(delta))
    }

    fn g_unchecked(&self, delta: f64) -> f64 {
        let t = delta / self.l_t;
        match self.temporal {
            TemporalFamily::Exponential => (-t).exp(),
            TemporalFamily::SquaredExponential => (-0.5 * t * t).exp(),
            TemporalFamily::RationalQuadratic { beta } => {
                (1.0 + t * t / (2.0 * beta)).powf(-beta)
            }
        }
    }

    /// Inverse of the temporal correlation: `g_inverse(g(delta)) == delta`.
    pub fn g_inverse(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y <= 1.0) {
            return Err(Error::Domain(format!("correlation must be in (0, 1], got {y}")));
        }
        let v = match self.temporal {
            TemporalFamily::Exponential => -self.l_t * y.ln(),
            TemporalFamily::SquaredExponential => self.l_t * (-2.0 * y.ln()).sqrt(),
            TemporalFamily::RationalQuadratic { beta } => {
                self.l_t * (2.0 * beta * (y.powf(-1.0 / beta) - 1.0)).sqrt()
            }
        };
        Ok(v.max(0.0))
    }

    /// Monotone bisection inverse of `g`, for temporal families without a
    /// closed-form inverse. The bracket is grown by doubling from `l_t`.
    pub fn g_inverse_bisect(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y <= 1.0) {
            return Err(Error::Domain(format!("correlation must be in (0, 1], got {y}")));
        }
        if y == 1.0 {
            return Ok(0.0);
        }
        let mut hi = self.l_t;
        let mut grow = 0;
        while self.g_unchecked(hi) >= y {
            hi *= 2.0;
            grow += 1;
            if grow > 2000 {
                return Err(Error::Numeric(format!(
                    "bisection bracket for g_inverse({y}) did not close"
                )));
            }
        }
        let mut lo = 0.0f64;
        loop {
            let mid = 0.5 * (lo + hi);
            if self.g_unchecked(mid) > y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * hi.max(1.0) {
                return Ok(0.5 * (lo + hi));
            }
        }
    }

    /// Spatial correlation for a plain Euclidean separation `r`.
    pub fn h_of_distance(&self, r: f64) -> f64 {
        let ls = match self.l_s {
            LengthScale::Infinite => return 1.0,
            LengthScale::Finite(ls) => ls,
        };
        let x = r / ls;
        match self.spatial {
            SpatialFamily::Exponential => (-x).exp(),
            SpatialFamily::SquaredExponential => (-0.5 * x * x).exp(),
            SpatialFamily::RationalQuadratic { alpha } => {
                (1.0 + x * x / (2.0 * alpha)).powf(-alpha)
            }
        }
    }

    /// Spatial correlation `h(a, b)`.
    pub fn h_spatial(&self, a: &Position, b: &Position) -> Result<f64> {
        Ok(self.h_of_distance(a.distance(b)?))
    }

    /// Age-equivalent distance of a sample at `from` with age `delta`, seen
    /// from `at`: the extra age a co-located sample could carry and be
    /// equally informative.
    pub fn aed(&self, from: &Position, at: &Position, delta: f64) -> Result<f64> {
        let r = from.distance(at)?;
        self.aed_of_distance(r, delta)
    }

    /// Like [`Kernel::aed`] but for a precomputed separation.
    pub fn aed_of_distance(&self, r: f64, delta: f64) -> Result<f64> {
        if !(delta >= 0.0) {
            return Err(Error::Domain(format!("age must be >= 0, got {delta}")));
        }
        let h = self.h_of_distance(r);
        if h >= 1.0 {
            return Ok(0.0);
        }
        let prod = self.g_unchecked(delta) * h;
        // A vanishing correlation carries no information; report an infinite
        // age offset instead of taking the log of zero.
        if prod < 1e-300 {
            return Ok(f64::INFINITY);
        }
        Ok((self.g_inverse(prod.min(1.0))? - delta).max(0.0))
    }
}

/// A sensor or point-of-interest location in 1-, 2-, or 3-dimensional
/// Euclidean space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Position(pub Vec<f64>);

impl Position {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || coords.len() > 3 {
            return Err(Error::Config(format!(
                "positions must have 1 to 3 coordinates, got {}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("position coordinates must be finite".into()));
        }
        Ok(Position(coords))
    }

    pub fn xy(x: f64, y: f64) -> Self {
        Position(vec![x, y])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn distance(&self, other: &Position) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::Domain(format!(
                "position dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

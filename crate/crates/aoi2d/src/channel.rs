//! Analytic age-of-information CCDFs for the links between sensors and the
//! monitor, plus the quick tail-bound provisioning calculus.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CCDF of the AoI of an M|M|1 queue with FCFS service.
pub fn ccdf_mm1(lambda: f64, mu: f64, y: f64) -> Result<f64> {
    check_mm1(lambda, mu)?;
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("y must be >= 0, got {y}")));
    }
    Ok(ccdf_mm1_unchecked(lambda, mu, y))
}

fn check_mm1(lambda: f64, mu: f64) -> Result<()> {
    if !(lambda > 0.0 && mu > 0.0 && lambda.is_finite() && mu.is_finite()) {
        return Err(Error::Config(format!("rates must be positive, got lambda={lambda} mu={mu}")));
    }
    if lambda >= mu {
        return Err(Error::Config(format!(
            "M|M|1 stability requires lambda < mu, got lambda={lambda} mu={mu}"
        )));
    }
    Ok(())
}

fn ccdf_mm1_unchecked(lambda: f64, mu: f64, y: f64) -> f64 {
    let rho = lambda / mu;
    let v = (-(1.0 - rho) * mu * y).exp() - (1.0 / (1.0 - rho) + rho * mu * y) * (-mu * y).exp()
        + (-lambda * y).exp() / (1.0 - rho);
    // near-cancellation can produce tiny negative values
    v.clamp(0.0, 1.0)
}

/// CCDF of the AoI over a slotted ALOHA channel with per-slot success
/// probability `q`. With `floor_mode` the slot structure is kept; without it
/// the continuous relaxation is used.
pub fn ccdf_aloha(q: f64, y: f64, floor_mode: bool) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("q must be in (0, 1), got {q}")));
    }
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("y must be >= 0, got {y}")));
    }
    let e = if floor_mode { y.floor() } else { y };
    Ok((1.0 - q).powf(e))
}

/// Exponential tail bound on [`ccdf_mm1`] at half utilization, valid for
/// `y >= 2 ln 3 / mu`.
pub fn mm1_tail_bound(mu: f64, y: f64) -> Result<f64> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::Config(format!("mu must be positive, got {mu}")));
    }
    let threshold = 2.0 * 3.0f64.ln() / mu;
    if y < threshold {
        return Err(Error::Domain(format!(
            "tail bound requires y >= 2 ln 3 / mu = {threshold}, got {y}"
        )));
    }
    Ok(3.0 * (-0.5 * mu * y).exp())
}

/// Service rate for a co-located sensor so that the two-sensor tail bound
/// equals `epsilon` at threshold `y_target`, given a distant sensor with rate
/// `mu2` and age-equivalent distance `aed`.
pub fn provision_rate(y_target: f64, epsilon: f64, mu2: f64, aed: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Config(format!("epsilon must be in (0, 1), got {epsilon}")));
    }
    if !(mu2 > 0.0 && y_target > 0.0 && aed >= 0.0) {
        return Err(Error::Config(format!(
            "need mu2 > 0, y_target > 0, aed >= 0; got mu2={mu2} y_target={y_target} aed={aed}"
        )));
    }
    let guard = y_target - 2.0 * 3.0f64.ln() / mu2;
    if aed >= guard {
        return Err(Error::Config(format!(
            "distant sensor cannot contribute: requires aed < y_target - 2 ln 3 / mu2, \
             i.e. {aed} < {guard}"
        )));
    }
    Ok(2.0 * (9.0f64.ln() - epsilon.ln()) / y_target - mu2 * (1.0 - aed / y_target))
}

/// Per-station success budget `q = 1 / (N e)` of a throughput-optimal slotted
/// ALOHA channel shared by `n_stations` stations.
pub fn aloha_budget(n_stations: f64) -> Result<f64> {
    if !(n_stations >= 1.0) {
        return Err(Error::Config(format!("need at least one station, got {n_stations}")));
    }
    Ok(1.0 / (n_stations * std::f64::consts::E))
}

/// A tabulated, right-continuous step CCDF, typically built from simulation
/// output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCcdf {
    /// Jump locations, strictly increasing.
    knots: Vec<f64>,
    /// Value at and after each knot; `values[i] = P[X > y]` for
    /// `y in [knots[i], knots[i+1])`.
    values: Vec<f64>,
}

impl EmpiricalCcdf {
    /// Tabulate the empirical CCDF of a sample set.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("empirical CCDF needs at least one sample".into()));
        }
        let mut sorted: Vec<f64> = samples.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let n = sorted.len() as f64;
        let mut knots = Vec::new();
        let mut values = Vec::new();
        let mut i = 0;
        while i < sorted.len() {
            let v = sorted[i];
            let mut j = i;
            while j < sorted.len() && sorted[j] == v {
                j += 1;
            }
            knots.push(v);
            values.push((sorted.len() - j) as f64 / n);
            i = j;
        }
        Ok(EmpiricalCcdf { knots, values })
    }

    pub fn eval(&self, y: f64) -> f64 {
        match self.knots.partition_point(|k| *k <= y) {
            0 => 1.0,
            i => self.values[i - 1],
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }
}

/// An AoI CCDF provider for one sensor link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ChannelModel {
    Mm1 { lambda: f64, mu: f64 },
    SlottedAloha { q: f64, floor_mode: bool },
    Empirical(EmpiricalCcdf),
}

impl ChannelModel {
    pub fn mm1(lambda: f64, mu: f64) -> Result<Self> {
        check_mm1(lambda, mu)?;
        Ok(ChannelModel::Mm1 { lambda, mu })
    }

    pub fn slotted_aloha(q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Config(format!("q must be in (0, 1), got {q}")));
        }
        Ok(ChannelModel::SlottedAloha { q, floor_mode: true })
    }

    pub fn slotted_aloha_continuous(q: f64) -> Result<Self> {
        let mut c = Self::slotted_aloha(q)?;
        if let ChannelModel::SlottedAloha { floor_mode, .. } = &mut c {
            *floor_mode = false;
        }
        Ok(c)
    }

    /// `P[AoI > y]` for this link; inputs below 0 evaluate to 1.
    pub fn ccdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 1.0;
        }
        match self {
            ChannelModel::Mm1 { lambda, mu } => ccdf_mm1_unchecked(*lambda, *mu, y),
            ChannelModel::SlottedAloha { q, floor_mode } => {
                let e = if *floor_mode { y.floor() } else { y };
                (1.0 - q).powf(e)
            }
            ChannelModel::Empirical(t) => t.eval(y),
        }
    }

    /// Discontinuity locations of the CCDF in `(0, y_max]`, sorted. Smooth
    /// models return an empty list.
    pub fn ccdf_knots(&self, y_max: f64) -> Vec<f64> {
        match self {
            ChannelModel::Mm1 { .. } => Vec::new(),
            ChannelModel::SlottedAloha { floor_mode: false, .. } => Vec::new(),
            ChannelModel::SlottedAloha { floor_mode: true, .. } => {
                (1..=y_max.floor() as u64).map(|k| k as f64).collect()
            }
            ChannelModel::Empirical(t) => {
                t.knots.iter().copied().filter(|k| *k > 0.0 && *k <= y_max).collect()
            }
        }
    }
}

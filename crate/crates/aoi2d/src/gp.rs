//! Gaussian-process posterior-variance engine for the all-samples
//! prediction, with a windowed simulation driver for its time average.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Kernel, Position};
use crate::sim::simulate_independent_aloha;

/// One delivered observation: which sensor, where, and when it was taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sensor: usize,
    pub position: Position,
    pub time: f64,
}

/// The observations available to the monitor at some instant.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub entries: Vec<Sample>,
}

impl SampleSet {
    pub fn new(entries: Vec<Sample>) -> Self {
        SampleSet { entries }
    }

    /// Keeps only samples generated within the past `horizon` before `now`.
    pub fn windowed(&self, now: f64, horizon: f64) -> SampleSet {
        SampleSet {
            entries: self
                .entries
                .iter()
                .filter(|s| s.time > now - horizon && s.time <= now)
                .cloned()
                .collect(),
        }
    }
}

/// Posterior variance at the target and the uncertainty reduction
/// contributed by the samples; the two always sum to the prior variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorResult {
    pub variance: f64,
    pub reduction: f64,
}

/// GP posterior variance of the process value at (`target`, `t`) given the
/// sample set, for observation noise `noise_var`. The mean function is 0 and
/// the result does not depend on the observed values.
pub fn posterior_variance(
    set: &SampleSet,
    k: &Kernel,
    target: &Position,
    t: f64,
    noise_var: f64,
) -> Result<PosteriorResult> {
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(Error::Config(format!("noise variance must be >= 0, got {noise_var}")));
    }
    let n = set.entries.len();
    if n == 0 {
        return Ok(PosteriorResult { variance: k.sigma2, reduction: 0.0 });
    }
    for s in &set.entries {
        if s.time > t {
            return Err(Error::Domain(format!(
                "sample of sensor {} at time {} is in the future of t = {t}",
                s.sensor, s.time
            )));
        }
    }
    // covariance of the observations and its cross-covariance to the target
    let mut sigma_ff = vec![0.0f64; n * n];
    let mut k_star = vec![0.0f64; n];
    for i in 0..n {
        let si = &set.entries[i];
        for j in 0..=i {
            let sj = &set.entries[j];
            let c = k.sigma2
                * k.g_temporal((si.time - sj.time).abs())?
                * k.h_spatial(&si.position, &sj.position)?;
            sigma_ff[i * n + j] = c;
            sigma_ff[j * n + i] = c;
        }
        sigma_ff[i * n + i] += noise_var;
        k_star[i] = k.sigma2 * k.g_temporal(t - si.time)? * k.h_spatial(&si.position, target)?;
    }
    // Cholesky with escalating jitter for (near-)duplicate samples
    let mut jitter = 1e-10 * k.sigma2;
    let chol = loop {
        match cholesky(&sigma_ff, n, jitter) {
            Ok(l) => break l,
            Err(row) => {
                jitter *= 10.0;
                if jitter > 1e-6 * k.sigma2 * (1.0 + 1e-12) {
                    let partner = offending_partner(&sigma_ff, n, row);
                    return Err(Error::Numeric(format!(
                        "observation covariance is not positive definite even with jitter; \
                         samples {} (sensor {}, t = {}) and {} (sensor {}, t = {}) are \
                         degenerate",
                        row,
                        set.entries[row].sensor,
                        set.entries[row].time,
                        partner,
                        set.entries[partner].sensor,
                        set.entries[partner].time,
                    )));
                }
            }
        }
    };
    let w = chol.solve(&k_star);
    let reduction: f64 = k_star.iter().zip(&w).map(|(a, b)| a * b).sum();
    let reduction = reduction.clamp(0.0, k.sigma2);
    Ok(PosteriorResult { variance: k.sigma2 - reduction, reduction })
}

struct Cholesky {
    l: Vec<f64>,
    n: usize,
}

/// Lower-triangular factorization of the symmetric matrix `a` (row-major)
/// with `jitter` added on the diagonal; on failure returns the failing row.
fn cholesky(a: &[f64], n: usize, jitter: f64) -> std::result::Result<Cholesky, usize> {
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            if i == j {
                s += jitter;
            }
            for p in 0..j {
                s -= l[i * n + p] * l[j * n + p];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(i);
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(Cholesky { l, n })
}

impl Cholesky {
    /// Solves `L L^T x = b`.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            for p in 0..i {
                x[i] -= self.l[i * n + p] * x[p];
            }
            x[i] /= self.l[i * n + i];
        }
        for i in (0..n).rev() {
            for p in i + 1..n {
                x[i] -= self.l[p * n + i] * x[p];
            }
            x[i] /= self.l[i * n + i];
        }
        x
    }
}

/// The sample most correlated with `row`, for the non-PD error message.
fn offending_partner(a: &[f64], n: usize, row: usize) -> usize {
    (0..n)
        .filter(|&j| j != row)
        .max_by(|&x, &y| a[row * n + x].abs().total_cmp(&a[row * n + y].abs()))
        .unwrap_or(row)
}

/// Configuration of the windowed all-samples simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllSamplesSimConfig {
    /// Sample retention horizon `T` in slots.
    pub horizon: f64,
    /// Number of evaluation instants after warm-up.
    pub n_evals: u64,
    /// Slots between evaluation instants.
    pub eval_stride: u64,
    /// Warm-up slots discarded before the first evaluation.
    pub warmup: u64,
    pub noise_var: f64,
    /// Retention cap per sensor within the horizon.
    pub max_samples_per_sensor: usize,
}

impl AllSamplesSimConfig {
    /// Defaults matching the all-samples study: `T = 1000`, warm-up of one
    /// horizon, evaluation at every slot.
    pub fn with_horizon(horizon: f64) -> Self {
        AllSamplesSimConfig {
            horizon,
            n_evals: 2000,
            eval_stride: 1,
            warmup: horizon.ceil() as u64,
            noise_var: 0.0,
            max_samples_per_sensor: 64,
        }
    }
}

/// Simulates independent ALOHA deliveries from sensors at `positions` with
/// per-slot budget `q` and time-averages the posterior variance at the point
/// of interest over all retained samples. Sensors enter the joint covariance
/// through their distance to the point of interest, so equidistant sensors
/// observe the process at the same effective location. Returns the mean and
/// a batch-means standard error.
pub fn mean_posterior_variance_sim(
    positions: &[Position],
    poi: &Position,
    k: &Kernel,
    q: f64,
    cfg: &AllSamplesSimConfig,
    seed: u64,
) -> Result<(f64, f64)> {
    if positions.is_empty() {
        return Err(Error::Config("need at least one sensor".into()));
    }
    if !(cfg.horizon > 0.0) || cfg.n_evals == 0 || cfg.eval_stride == 0 {
        return Err(Error::Config("horizon, n_evals and eval_stride must be positive".into()));
    }
    let n_slots = cfg.warmup + cfg.n_evals * cfg.eval_stride;
    // the process relevance of a sample is range-based: it depends on the
    // distance to the point of interest only, so sensors are embedded on the
    // range axis before forming the joint covariance
    let radial: Vec<Position> = positions
        .iter()
        .map(|p| Position::new(vec![p.distance(poi)?]))
        .collect::<Result<_>>()?;
    let poi = Position::new(vec![0.0])?;
    let log = simulate_independent_aloha(positions.len(), q, n_slots, seed)?;
    // per sensor: (gen, delivery) sorted by delivery time, with a sliding
    // window over the retention horizon
    let streams: Vec<Vec<(f64, f64)>> =
        (0..positions.len()).map(|s| log.deliveries(s).collect()).collect();
    let mut lo = vec![0usize; streams.len()];
    let mut hi = vec![0usize; streams.len()];
    let mut values = Vec::with_capacity(cfg.n_evals as usize);
    for e in 0..cfg.n_evals {
        let t = (cfg.warmup + (e + 1) * cfg.eval_stride) as f64;
        let mut entries = Vec::new();
        for s in 0..streams.len() {
            while hi[s] < streams[s].len() && streams[s][hi[s]].1 <= t {
                hi[s] += 1;
            }
            while lo[s] < hi[s] && streams[s][lo[s]].0 <= t - cfg.horizon {
                lo[s] += 1;
            }
            let first = hi[s].saturating_sub(cfg.max_samples_per_sensor).max(lo[s]);
            for &(gen, _) in &streams[s][first..hi[s]] {
                entries.push(Sample { sensor: s, position: radial[s].clone(), time: gen });
            }
        }
        values
            .push(posterior_variance(&SampleSet::new(entries), k, &poi, t, cfg.noise_var)?.variance);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    // batch means absorb the autocorrelation of the path
    let n_batches = 30.min(values.len());
    let batch_len = values.len() / n_batches;
    let mut batch_means = Vec::with_capacity(n_batches);
    for b in 0..n_batches {
        let chunk = &values[b * batch_len..(b + 1) * batch_len];
        batch_means.push(chunk.iter().sum::<f64>() / chunk.len() as f64);
    }
    let bm = batch_means.iter().sum::<f64>() / n_batches as f64;
    let bvar = batch_means.iter().map(|x| (x - bm) * (x - bm)).sum::<f64>()
        / (n_batches as f64 - 1.0).max(1.0);
    Ok((mean, (bvar / n_batches as f64).sqrt()))
}

//! Seeded discrete-event simulators producing delivery logs and empirical
//! AoI / 2D-AoI distributions, used to cross-validate the analytic formulas.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::exp_sample;
use crate::channel::EmpiricalCcdf;
use crate::error::{Error, Result};
use crate::kernel::{Kernel, Position};

/// One sample of one sensor: generation time and, if it made it to the
/// monitor, delivery time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub gen_time: f64,
    pub delivery_time: Option<f64>,
}

/// Per-sensor sample histories of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryLog {
    pub per_sensor: Vec<Vec<DeliveryRecord>>,
    /// Transmission attempts per sensor, including collided ones that left
    /// no record.
    pub attempts: Vec<u64>,
    pub horizon: f64,
    pub seed: u64,
}

impl DeliveryLog {
    fn new(n_sensors: usize, horizon: f64, seed: u64) -> Self {
        DeliveryLog {
            per_sensor: vec![Vec::new(); n_sensors],
            attempts: vec![0; n_sensors],
            horizon,
            seed,
        }
    }

    pub fn n_sensors(&self) -> usize {
        self.per_sensor.len()
    }

    pub fn deliveries(&self, sensor: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.per_sensor[sensor]
            .iter()
            .filter_map(|r| r.delivery_time.map(|d| (r.gen_time, d)))
    }

    /// Writes the log as CSV with columns `sensor,i,A,D,delivered`.
    pub fn export_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["sensor", "i", "A", "D", "delivered"]).map_err(csv_err)?;
        for (sensor, records) in self.per_sensor.iter().enumerate() {
            for (i, r) in records.iter().enumerate() {
                let (d, flag) = match r.delivery_time {
                    Some(d) => (format!("{d}"), "1"),
                    None => (String::new(), "0"),
                };
                wtr.write_record([
                    sensor.to_string(),
                    i.to_string(),
                    format!("{}", r.gen_time),
                    d,
                    flag.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Numeric(format!("csv write failed: {e}"))
}

/// Simulation mode and parameters, as referenced from scenario configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SimMode {
    IndependentAloha { n_sensors: usize, q: f64 },
    SharedAloha { n_sensors: usize, p: f64 },
    Mm1 { lambda: f64, mu: f64 },
    RandomAed { omega: f64, p_succ: f64, q: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(flatten)]
    pub mode: SimMode,
    /// Horizon in slots (slotted modes) or time units (continuous modes).
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if !(self.warmup >= 0.0 && self.warmup < self.horizon) {
            return Err(Error::Config(format!(
                "warmup must lie in [0, horizon = {}), got {}",
                self.horizon, self.warmup
            )));
        }
        Ok(())
    }
}

/// Slotted ALOHA with independent per-sensor channels: every slot each
/// sensor delivers a fresh sample with probability `q`. The sample is
/// generated at the slot start and delivered at the slot end.
pub fn simulate_independent_aloha(
    n_sensors: usize,
    q: f64,
    n_slots: u64,
    seed: u64,
) -> Result<DeliveryLog> {
    if n_sensors == 0 {
        return Err(Error::Config("need at least one sensor".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Config(format!("q must be in (0, 1), got {q}")));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut log = DeliveryLog::new(n_sensors, n_slots as f64, seed);
    for slot in 1..=n_slots {
        for sensor in 0..n_sensors {
            if rng.gen::<f64>() < q {
                log.attempts[sensor] += 1;
                log.per_sensor[sensor].push(DeliveryRecord {
                    gen_time: (slot - 1) as f64,
                    delivery_time: Some(slot as f64),
                });
            }
        }
    }
    Ok(log)
}

/// Slotted ALOHA on one shared channel: every slot each sensor transmits a
/// fresh sample with probability `p`; the sample is delivered only if no
/// other sensor transmits in the same slot, otherwise all transmitted
/// samples are lost.
pub fn simulate_shared_aloha(
    n_sensors: usize,
    p: f64,
    n_slots: u64,
    seed: u64,
) -> Result<DeliveryLog> {
    if n_sensors == 0 {
        return Err(Error::Config("need at least one sensor".into()));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Config(format!("p must be in (0, 1], got {p}")));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut log = DeliveryLog::new(n_sensors, n_slots as f64, seed);
    for slot in 1..=n_slots {
        let mut transmitter = None;
        let mut collided = false;
        for sensor in 0..n_sensors {
            if rng.gen::<f64>() < p {
                log.attempts[sensor] += 1;
                collided = transmitter.is_some();
                if !collided {
                    transmitter = Some(sensor);
                }
            }
        }
        if let (Some(sensor), false) = (transmitter, collided) {
            log.per_sensor[sensor].push(DeliveryRecord {
                gen_time: (slot - 1) as f64,
                delivery_time: Some(slot as f64),
            });
        }
    }
    Ok(log)
}

/// Single M|M|1 FCFS queue: Poisson arrivals, exponential services,
/// departures by the Lindley recursion.
pub fn simulate_mm1(lambda: f64, mu: f64, t_end: f64, seed: u64) -> Result<DeliveryLog> {
    if !(lambda > 0.0 && mu > 0.0 && lambda < mu) {
        return Err(Error::Config(format!(
            "M|M|1 stability requires 0 < lambda < mu, got lambda={lambda} mu={mu}"
        )));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::Config(format!("t_end must be > 0, got {t_end}")));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut log = DeliveryLog::new(1, t_end, seed);
    let mut arrival = 0.0f64;
    let mut depart = 0.0f64;
    loop {
        arrival += exp_sample(&mut rng, lambda);
        if arrival > t_end {
            break;
        }
        depart = arrival.max(depart) + exp_sample(&mut rng, mu);
        log.attempts[0] += 1;
        log.per_sensor[0]
            .push(DeliveryRecord { gen_time: arrival, delivery_time: Some(depart) });
    }
    Ok(log)
}

/// Path simulation of the random-AeD model: a sensor samples its position at
/// Poisson(`omega`) instants thinned by Bernoulli(`p_succ`) successes, and a
/// continuous ALOHA channel with `P[AoI > y] = (1-q)^y` delivers the most
/// recent successful sample. Returns 2D-AoI values seen by a Poisson(1)
/// observer after `warmup`.
pub fn simulate_random_aed(
    omega: f64,
    p_succ: f64,
    q: f64,
    t_end: f64,
    warmup: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(omega > 0.0) || !(p_succ > 0.0 && p_succ <= 1.0) || !(q > 0.0 && q < 1.0) {
        return Err(Error::Config(format!(
            "bad random-AeD parameters omega={omega} p_succ={p_succ} q={q}"
        )));
    }
    if !(t_end > warmup && warmup >= 0.0) {
        return Err(Error::Config(format!("need 0 <= warmup < t_end, got {warmup}, {t_end}")));
    }
    let nu = -(1.0 - q).ln(); // delivery rate matching the channel CCDF
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut next_sample = exp_sample(&mut rng, omega);
    let mut next_delivery = exp_sample(&mut rng, nu);
    let mut next_obs = warmup + exp_sample(&mut rng, 1.0);
    let mut last_success: Option<f64> = None;
    // generation time of the sample held by the monitor
    let mut monitor_gen: Option<f64> = None;
    let mut out = Vec::new();
    loop {
        let t = next_sample.min(next_delivery).min(next_obs);
        if t > t_end {
            break;
        }
        if t == next_obs {
            if let Some(g) = monitor_gen {
                out.push(t - g);
            }
            next_obs = t + exp_sample(&mut rng, 1.0);
        } else if t == next_delivery {
            if last_success.is_some() {
                monitor_gen = last_success;
            }
            next_delivery = t + exp_sample(&mut rng, nu);
        } else {
            if rng.gen::<f64>() < p_succ {
                last_success = Some(t);
            }
            next_sample = t + exp_sample(&mut rng, omega);
        }
    }
    Ok(out)
}

/// AoI of one sensor at time `t`: the age of the freshest sample delivered
/// by `t`, or infinity before the first delivery.
pub fn aoi_at(log: &DeliveryLog, sensor: usize, t: f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for (gen, d) in log.deliveries(sensor) {
        if d <= t && gen > best {
            best = gen;
        }
    }
    if best.is_finite() {
        t - best
    } else {
        f64::INFINITY
    }
}

/// Exact time-average AoI of one sensor over `[t_start, t_end]`, integrating
/// the sawtooth path. The window must start after the first delivery.
pub fn aoi_time_average(
    log: &DeliveryLog,
    sensor: usize,
    t_start: f64,
    t_end: f64,
) -> Result<f64> {
    if !(t_end > t_start) {
        return Err(Error::Config(format!("empty window [{t_start}, {t_end}]")));
    }
    let mut events: Vec<(f64, f64)> = log.deliveries(sensor).map(|(g, d)| (d, g)).collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cur_gen: Option<f64> = None;
    let mut cursor = t_start;
    let mut integral = 0.0;
    for (d, g) in events {
        if d <= t_start {
            if cur_gen.is_none_or(|c| g > c) {
                cur_gen = Some(g);
            }
            continue;
        }
        if d > t_end {
            break;
        }
        let gen = cur_gen
            .ok_or_else(|| Error::Config("window starts before the first delivery".into()))?;
        integral += 0.5 * ((d - gen).powi(2) - (cursor - gen).powi(2));
        cursor = d;
        if g > gen {
            cur_gen = Some(g);
        }
    }
    let gen =
        cur_gen.ok_or_else(|| Error::Config("window starts before the first delivery".into()))?;
    integral += 0.5 * ((t_end - gen).powi(2) - (cursor - gen).powi(2));
    Ok(integral / (t_end - t_start))
}

/// Time fraction of `[t_start, t_end]` with AoI above `y`, computed exactly
/// from the sawtooth path. Spans before the first delivery count as above.
pub fn aoi_ccdf_time_fraction(
    log: &DeliveryLog,
    sensor: usize,
    y: f64,
    t_start: f64,
    t_end: f64,
) -> Result<f64> {
    if !(t_end > t_start) {
        return Err(Error::Config(format!("empty window [{t_start}, {t_end}]")));
    }
    let mut events: Vec<(f64, f64)> = log.deliveries(sensor).map(|(g, d)| (d, g)).collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cur_gen: Option<f64> = None;
    let mut cursor = t_start;
    let mut above = 0.0;
    let span = |gen: Option<f64>, from: f64, to: f64| -> f64 {
        if to <= from {
            return 0.0;
        }
        match gen {
            None => to - from,
            // AoI exceeds y from gen + y onward
            Some(g) => (to - (g + y).max(from)).max(0.0),
        }
    };
    for (d, g) in events {
        if d <= t_start {
            if cur_gen.is_none_or(|c| g > c) {
                cur_gen = Some(g);
            }
            continue;
        }
        if d > t_end {
            break;
        }
        above += span(cur_gen, cursor, d);
        cursor = d;
        if cur_gen.is_none_or(|c| g > c) {
            cur_gen = Some(g);
        }
    }
    above += span(cur_gen, cursor, t_end);
    Ok(above / (t_end - t_start))
}

/// AoI of one sensor at every integer slot boundary in
/// `[first_slot, last_slot]`. Slots before the first delivery report
/// infinity.
pub fn aoi_slot_samples(
    log: &DeliveryLog,
    sensor: usize,
    first_slot: u64,
    last_slot: u64,
) -> Result<Vec<f64>> {
    if last_slot < first_slot {
        return Err(Error::Config(format!("empty slot range [{first_slot}, {last_slot}]")));
    }
    let mut events: Vec<(f64, f64)> = log.deliveries(sensor).map(|(g, d)| (d, g)).collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::with_capacity((last_slot - first_slot + 1) as usize);
    let mut cur_gen: Option<f64> = None;
    let mut i = 0usize;
    for t in first_slot..=last_slot {
        let t = t as f64;
        while i < events.len() && events[i].0 <= t {
            let g = events[i].1;
            if cur_gen.is_none_or(|c| g > c) {
                cur_gen = Some(g);
            }
            i += 1;
        }
        out.push(cur_gen.map_or(f64::INFINITY, |g| t - g));
    }
    Ok(out)
}

/// Empirical 2D-AoI summary at a set of observation times.
#[derive(Debug, Clone)]
pub struct Empirical2d {
    /// Finite 2D-AoI observations, one per usable observation time.
    pub samples: Vec<f64>,
    pub ccdf: EmpiricalCcdf,
    pub mean: f64,
    /// Standard error of the mean, treating observations as independent.
    pub stderr: f64,
    /// How often each sensor held the minimal 2D-AoI (ties go to the lowest
    /// index).
    pub win_counts: Vec<u64>,
    /// Observation times before any delivery; excluded from the moments.
    pub undefined_count: u64,
}

/// Evaluates the minimal 2D-AoI over all sensors of a delivery log at each
/// observation time: per sensor the AoI plus its age-dependent AeD, then the
/// minimum.
pub fn empirical_2d_aoi(
    log: &DeliveryLog,
    k: &Kernel,
    positions: &[Position],
    poi: &Position,
    sample_times: &[f64],
) -> Result<Empirical2d> {
    if positions.len() != log.n_sensors() {
        return Err(Error::Config(format!(
            "{} positions for {} sensors",
            positions.len(),
            log.n_sensors()
        )));
    }
    if sample_times.is_empty() {
        return Err(Error::Config("no observation times".into()));
    }
    let mut times: Vec<f64> = sample_times.to_vec();
    times.sort_by(|a, b| a.total_cmp(b));
    let dists: Vec<f64> =
        positions.iter().map(|p| p.distance(poi)).collect::<Result<Vec<_>>>()?;
    // per sensor: deliveries sorted by delivery time, plus a sweep cursor
    let mut streams: Vec<Vec<(f64, f64)>> = (0..log.n_sensors())
        .map(|s| log.deliveries(s).map(|(g, d)| (d, g)).collect())
        .collect();
    for s in &mut streams {
        s.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let mut cursor = vec![0usize; streams.len()];
    let mut freshest: Vec<Option<f64>> = vec![None; streams.len()];
    let mut samples = Vec::with_capacity(times.len());
    let mut win_counts = vec![0u64; streams.len()];
    let mut undefined = 0u64;
    for &t in &times {
        let mut best = f64::INFINITY;
        let mut winner = None;
        for s in 0..streams.len() {
            while cursor[s] < streams[s].len() && streams[s][cursor[s]].0 <= t {
                let g = streams[s][cursor[s]].1;
                if freshest[s].is_none_or(|c| g > c) {
                    freshest[s] = Some(g);
                }
                cursor[s] += 1;
            }
            let Some(g) = freshest[s] else { continue };
            let age = t - g;
            let aoi2d = age + k.aed_of_distance(dists[s], age)?;
            if aoi2d < best {
                best = aoi2d;
                winner = Some(s);
            }
        }
        match winner {
            Some(s) if best.is_finite() => {
                win_counts[s] += 1;
                samples.push(best);
            }
            _ => undefined += 1,
        }
    }
    if samples.is_empty() {
        return Err(Error::Config("no observation time had a delivered sample".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(Empirical2d {
        ccdf: EmpiricalCcdf::from_samples(&samples)?,
        mean,
        stderr: (var / n).sqrt(),
        samples,
        win_counts,
        undefined_count: undefined,
    })
}

/// Poisson(`rate`) observation instants in `(t_start, t_end)`, for unbiased
/// time averages of continuous-time paths.
pub fn poisson_observer_times(rate: f64, t_start: f64, t_end: f64, seed: u64) -> Result<Vec<f64>> {
    if !(rate > 0.0 && t_end > t_start) {
        return Err(Error::Config(format!(
            "need rate > 0 and t_end > t_start, got rate={rate}, [{t_start}, {t_end}]"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut t = t_start;
    let mut out = Vec::new();
    loop {
        t += exp_sample(&mut rng, rate);
        if t >= t_end {
            return Ok(out);
        }
        out.push(t);
    }
}

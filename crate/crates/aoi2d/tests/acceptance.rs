//! Acceptance gate: one test per criterion, each printing a single
//! PASS line (visible with `--nocapture`) or failing with a FAIL line.

use std::time::Instant;

use aoi2d::calculus::mm1_mean_aoi;
use aoi2d::channel::{ccdf_mm1, mm1_tail_bound, provision_rate};
use aoi2d::gp::{posterior_variance, Sample, SampleSet};
use aoi2d::scenario::{preset, run_scenario, RunOptions};
use aoi2d::sim::{empirical_2d_aoi, simulate_independent_aloha, simulate_shared_aloha};
use aoi2d::{
    capacity_split, ccdf_2d_min, ccdf_2d_random_aed, ccdf_2d_single, grid_layout, grid_links,
    mean_from_ccdf, quantile_from_ccdf, CcdfFn, ChannelModel, CountMode, GridChannel, GridSpec,
    Kernel, LengthScale, Position, SensorLink,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn pass(n: usize, name: &str, detail: String) {
    println!("criterion {n} ({name}): PASS - {detail}");
}

macro_rules! gate {
    ($n:expr, $name:expr, $cond:expr, $($msg:tt)*) => {
        assert!($cond, "criterion {} ({}): FAIL - {}", $n, $name, format!($($msg)*));
    };
}

fn no_opts() -> RunOptions {
    RunOptions { out_dir: None, seed: None, workers: None, refine_min: false }
}

fn curve_min(table: &aoi2d::scenario::ResultTable, curve: &str, metric: &str) -> (f64, f64) {
    table
        .curve_rows(curve, metric)
        .iter()
        .filter_map(|r| r.analytic.map(|v| (r.sweep, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("curve has no finite rows")
}

#[test]
fn criterion_1_grid_mm1_flagship() {
    let (n, name) = (1, "grid M|M|1 flagship");
    let t0 = Instant::now();
    let table = run_scenario(&preset("fig5a").unwrap(), &no_opts()).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    let (d_min, v_min) = curve_min(&table, "ls128", "mean_2d_aoi");
    gate!(n, name, (v_min - 38.0).abs() <= 0.05 * 38.0, "minimum {v_min:.3} not within 38 +- 5%");
    gate!(n, name, (d_min - 34.0).abs() <= 2.0, "argmin d = {d_min} not within 34 +- 2");
    gate!(n, name, elapsed < 120.0, "runtime {elapsed:.1}s exceeds 2 minutes");
    pass(n, name, format!("min {v_min:.3} at d = {d_min}, {elapsed:.1}s"));
}

#[test]
fn criterion_2_tier_thresholds() {
    let (n, name) = (2, "tier thresholds");
    let k = Kernel::exponential(1.0, 128.0, LengthScale::Finite(128.0)).unwrap();
    let d = 34.0;
    let rt2 = 2f64.sqrt();
    let tier1 = k.aed_of_distance(d / rt2, 0.0).unwrap();
    let tier2 = k.aed_of_distance(5f64.sqrt() * d / rt2, 0.0).unwrap();
    let tier3 = k.aed_of_distance(3.0 * d / rt2, 0.0).unwrap();
    gate!(n, name, (tier1 - 24.0).abs() <= 0.05, "tier-1 AeD {tier1:.4} not 24");
    gate!(n, name, (tier2 - 53.8).abs() <= 0.1, "tier-2 AeD {tier2:.4} not 53.8 +- 0.1");
    gate!(n, name, (tier3 - 72.1).abs() <= 0.1, "tier-3 AeD {tier3:.4} not 72.1 +- 0.1");

    // crossover where the 12 tier-2 sensors together beat the 4 tier-1
    // sensors, on the S=36 M|M|1 grid
    let poi = Position::xy(0.0, 0.0);
    let tier_mean = |d: f64, tier: u8| -> f64 {
        let spec = GridSpec {
            d,
            area_side: 300.0,
            s_select: 36,
            capacity: 10.0,
            channel: GridChannel::Mm1 { rho: 0.53 },
            count_mode: CountMode::Padded,
        };
        let channel = capacity_split(&spec).unwrap();
        let links: Vec<SensorLink> = grid_layout(&spec)
            .unwrap()
            .into_iter()
            .enumerate()
            .filter(|(_, s)| s.tier == tier)
            .map(|(index, s)| SensorLink { index, position: s.position, channel: channel.clone() })
            .collect();
        mean_from_ccdf(&ccdf_2d_min(&links, &k, &poi).unwrap()).unwrap()
    };
    let gap = |d: f64| tier_mean(d, 1) - tier_mean(d, 2);
    let (mut lo, mut hi) = (14.0, 25.0);
    gate!(n, name, gap(lo) > 0.0 && gap(hi) < 0.0, "no tier crossover bracketed in [{lo}, {hi}]");
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let crossover = 0.5 * (lo + hi);
    gate!(n, name, (crossover - 18.9).abs() <= 0.5, "crossover {crossover:.2} not 18.9 +- 0.5");

    let table = run_scenario(&preset("appendixE").unwrap(), &no_opts()).unwrap();
    let refined = |curve: &str| {
        let r = &table.curve_rows(curve, "mean_min_refined")[0];
        (r.sweep, r.analytic.unwrap())
    };
    let (d36, v36) = refined("s36");
    let (d16, v16) = refined("s16");
    gate!(n, name, (v36 - 59.0).abs() <= 0.02 * 59.0, "s36 minimum {v36:.2} not 59 +- 2%");
    gate!(n, name, (d36 - 24.0).abs() <= 2.0, "s36 argmin {d36:.2} not 24 +- 2");
    gate!(n, name, (v16 - 60.8).abs() <= 0.02 * 60.8, "s16 minimum {v16:.2} not 60.8 +- 2%");
    gate!(n, name, (d16 - 34.5).abs() <= 2.0, "s16 argmin {d16:.2} not 34.5 +- 2");
    pass(
        n,
        name,
        format!(
            "AeDs {tier1:.2}/{tier2:.2}/{tier3:.2}, crossover d = {crossover:.2}, \
             minima {v36:.2}@{d36:.1} and {v16:.2}@{d16:.1}"
        ),
    );
}

#[test]
fn criterion_3_prediction_variance_table() {
    let (n, name) = (3, "prediction variance table");
    let t0 = Instant::now();
    let table = run_scenario(&preset("table1").unwrap(), &no_opts()).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    let best = [("ls64", 0.761), ("ls128", 0.597), ("ls256", 0.445), ("ls512", 0.330), ("lsinf", 0.169)];
    let all = [("ls64", 0.738), ("ls128", 0.553), ("ls256", 0.402), ("ls512", 0.301), ("lsinf", 0.169)];
    for (curve, want) in best {
        let got = table.curve_rows(curve, "predvar_mean")[0].analytic.unwrap();
        gate!(n, name, (got - want).abs() <= 0.005, "best-sample {curve}: {got:.4} not {want} +- 0.005");
    }
    for (curve, want) in all {
        let got = table.curve_rows(curve, "predvar_allsamples_sim")[0].sim.unwrap();
        gate!(n, name, (got - want).abs() <= 0.02, "all-samples {curve}: {got:.4} not {want} +- 0.02");
    }
    gate!(n, name, elapsed < 900.0, "runtime {elapsed:.1}s exceeds 15 minutes");
    pass(n, name, format!("10 table entries within tolerance, {elapsed:.1}s"));
}

#[test]
fn criterion_4_star_topology() {
    let (n, name) = (4, "star topology");
    let table = run_scenario(&preset("star").unwrap(), &no_opts()).unwrap();
    let argmin = |curve: &str| {
        table
            .curve_rows(curve, "mean_2d_aoi")
            .iter()
            .filter_map(|r| r.analytic.map(|v| (r.sweep, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0
    };
    for curve in ["d0", "d5"] {
        let m = argmin(curve);
        gate!(n, name, (m - 1.0).abs() < 1e-9, "{curve}: optimal mu_center {m} != 1");
    }
    for curve in ["d25", "d50"] {
        let m = argmin(curve);
        gate!(n, name, m.abs() < 1e-9, "{curve}: optimal mu_center {m} != 0");
    }
    // bend of the d=50 0.9-quantile curve: interior maximum-curvature point
    let rows = table.curve_rows("d50", "quantile_0.9");
    let vals: Vec<(f64, f64)> =
        rows.iter().filter_map(|r| r.analytic.map(|v| (r.sweep, v))).collect();
    let bend = (1..vals.len() - 1)
        .max_by(|&i, &j| {
            let c = |i: usize| (vals[i + 1].1 - 2.0 * vals[i].1 + vals[i - 1].1).abs();
            c(i).total_cmp(&c(j))
        })
        .map(|i| vals[i].0)
        .unwrap();
    gate!(n, name, (bend - 0.47).abs() <= 0.05, "quantile bend at {bend:.2}, not 0.47 +- 0.05");
    pass(n, name, format!("optima at mu_center 1/1/0/0, bend at {bend:.2}"));
}

#[test]
fn criterion_5_optimal_utilization() {
    let (n, name) = (5, "optimal utilization");
    let mean = |rho: f64| mm1_mean_aoi(rho, 1.0);
    let (mut a, mut b) = (0.3, 0.8);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut x1, mut x2) = (b - phi * (b - a), a + phi * (b - a));
    let (mut f1, mut f2) = (mean(x1), mean(x2));
    for _ in 0..80 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = mean(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = mean(x2);
        }
    }
    let rho_opt = 0.5 * (a + b);
    gate!(n, name, (rho_opt - 0.53).abs() <= 0.01, "argmin rho {rho_opt:.4} not 0.53 +- 0.01");
    pass(n, name, format!("mean-AoI argmin rho = {rho_opt:.4}"));
}

fn aloha_grid(d: f64, s_select: usize) -> GridSpec {
    GridSpec {
        d,
        area_side: 300.0,
        s_select,
        capacity: 10.0,
        channel: GridChannel::Aloha { floor_mode: true },
        count_mode: CountMode::Padded,
    }
}

#[test]
fn criterion_6_sim_cross_validation() {
    let (n, name) = (6, "analysis vs simulation");
    let spec = aloha_grid(40.0, 16);
    let k = Kernel::exponential(1.0, 128.0, LengthScale::Finite(128.0)).unwrap();
    let (links, poi) = grid_links(&spec).unwrap();
    let ChannelModel::SlottedAloha { q, .. } = links[0].channel else {
        panic!("criterion {n} ({name}): FAIL - expected an ALOHA grid channel");
    };
    let positions: Vec<Position> = links.iter().map(|l| l.position.clone()).collect();
    let analytic = ccdf_2d_min(&links, &k, &poi).unwrap();
    let ys: Vec<f64> = (1..=20)
        .map(|i| quantile_from_ccdf(&analytic, i as f64 / 21.0).unwrap())
        .collect();

    // independent channels: empirical CCDF vs the analytic product at 20
    // points, within 4 standard errors across seeds
    let (warmup, slots) = (2000u64, 40_000u64);
    let times: Vec<f64> = (warmup + 1..=slots).map(|t| t as f64).collect();
    let n_seeds = 10;
    let mut per_seed = Vec::new();
    for seed in 0..n_seeds {
        let log = simulate_independent_aloha(positions.len(), q, slots, 9000 + seed).unwrap();
        let emp = empirical_2d_aoi(&log, &k, &positions, &poi, &times).unwrap();
        per_seed.push(ys.iter().map(|&y| emp.ccdf.eval(y)).collect::<Vec<f64>>());
    }
    let mut worst = 0.0f64;
    for (j, &y) in ys.iter().enumerate() {
        let m = per_seed.iter().map(|c| c[j]).sum::<f64>() / n_seeds as f64;
        let var = per_seed.iter().map(|c| (c[j] - m) * (c[j] - m)).sum::<f64>()
            / (n_seeds as f64 - 1.0);
        let se = (var / n_seeds as f64).sqrt();
        let dev = (m - analytic.eval(y)).abs();
        gate!(
            n,
            name,
            dev <= 4.0 * se + 1e-3,
            "CCDF at y = {y:.2}: sim {m:.4} vs analytic {:.4} exceeds 4 SE ({se:.5})",
            analytic.eval(y)
        );
        worst = worst.max(if se > 0.0 { dev / se } else { 0.0 });
    }

    // shared channel: the full contention set transmits, distant sensors act
    // as interferers only; means must stay within 2% of independent
    let n_total = 72;
    let p = 1.0 / n_total as f64;
    let q_ind = 1.0 / (n_total as f64 * std::f64::consts::E);
    let far = Position::xy(1e6, 1e6);
    let mut shared_pos = positions.clone();
    shared_pos.resize(n_total, far);
    let (slots2, times2): (u64, Vec<f64>) =
        (120_000, (warmup + 1..=120_000).map(|t| t as f64).collect());
    let mut means = [0.0f64; 2];
    for (slot_idx, shared) in [false, true].into_iter().enumerate() {
        let mut acc = 0.0;
        let reps = 4;
        for seed in 0..reps {
            let log = if shared {
                simulate_shared_aloha(n_total, p, slots2, 500 + seed).unwrap()
            } else {
                simulate_independent_aloha(positions.len(), q_ind, slots2, 700 + seed).unwrap()
            };
            let pos = if shared { &shared_pos } else { &positions };
            acc += empirical_2d_aoi(&log, &k, pos, &poi, &times2).unwrap().mean;
        }
        means[slot_idx] = acc / reps as f64;
    }
    let rel = (means[1] - means[0]).abs() / means[0];
    gate!(
        n,
        name,
        rel < 0.02,
        "shared mean {:.3} vs independent {:.3}: {:.2}% apart",
        means[1],
        means[0],
        100.0 * rel
    );
    pass(
        n,
        name,
        format!(
            "20 CCDF points within 4 SE (worst {worst:.2} SE), shared vs independent {:.2}%",
            100.0 * rel
        ),
    );
}

fn random_kernel(rng: &mut ChaCha12Rng) -> Kernel {
    let sigma2 = 0.5 + rng.gen::<f64>() * 2.0;
    let l_t = 20.0 + rng.gen::<f64>() * 300.0;
    let l_s = LengthScale::Finite(20.0 + rng.gen::<f64>() * 300.0);
    match rng.gen_range(0..3) {
        0 => Kernel::exponential(sigma2, l_t, l_s),
        1 => Kernel::squared_exponential(sigma2, l_t, l_s),
        _ => Kernel::rational_quadratic(
            sigma2,
            l_t,
            l_s,
            0.5 + rng.gen::<f64>() * 5.0,
            0.5 + rng.gen::<f64>() * 5.0,
        ),
    }
    .unwrap()
}

fn random_channel(rng: &mut ChaCha12Rng) -> ChannelModel {
    if rng.gen::<bool>() {
        let mu = 0.2 + rng.gen::<f64>() * 5.0;
        let rho = 0.1 + rng.gen::<f64>() * 0.8;
        ChannelModel::mm1(rho * mu, mu).unwrap()
    } else {
        ChannelModel::slotted_aloha(0.002 + rng.gen::<f64>() * 0.5).unwrap()
    }
}

#[test]
fn criterion_7_property_suites() {
    let (n, name) = (7, "property suites");
    let mut rng = ChaCha12Rng::seed_from_u64(20240817);
    let poi = Position::xy(0.0, 0.0);

    // CCDF monotonicity and range over random configurations
    for _ in 0..1000 {
        let k = random_kernel(&mut rng);
        let link = SensorLink {
            index: 0,
            position: Position::xy(rng.gen::<f64>() * 150.0, rng.gen::<f64>() * 150.0),
            channel: random_channel(&mut rng),
        };
        let f: CcdfFn = ccdf_2d_single(&link, &k, &poi).unwrap();
        let mut prev = 1.0 + 1e-12;
        let mut y = 0.0;
        for _ in 0..20 {
            y += rng.gen::<f64>() * 60.0;
            let v = f.eval(y);
            gate!(n, name, (0.0..=1.0).contains(&v), "CCDF value {v} out of range at y = {y}");
            gate!(n, name, v <= prev + 1e-12, "CCDF increased: {prev} -> {v} at y = {y}");
            prev = v;
        }
    }

    // AeD defining identity g(delta + aed) = g(delta) h(r)
    for _ in 0..1000 {
        let k = random_kernel(&mut rng);
        let r = rng.gen::<f64>() * 200.0;
        let delta = rng.gen::<f64>() * 100.0;
        let aed = k.aed_of_distance(r, delta).unwrap();
        if !aed.is_finite() {
            continue;
        }
        let lhs = k.g_temporal(delta + aed).unwrap();
        let rhs = k.g_temporal(delta).unwrap() * k.h_of_distance(r);
        gate!(n, name, (lhs - rhs).abs() <= 1e-9, "AeD identity off by {}", (lhs - rhs).abs());
    }

    // squared-exponential AeD decreases toward zero with age
    for _ in 0..200 {
        let l = 20.0 + rng.gen::<f64>() * 200.0;
        let k = Kernel::squared_exponential(1.0, l, LengthScale::Finite(l)).unwrap();
        let r = 5.0 + rng.gen::<f64>() * 100.0;
        let mut prev = f64::INFINITY;
        for delta in [0.0, 0.05 * l, 0.2 * l, l, 3.0 * l, 10.0 * l] {
            let a = k.aed_of_distance(r, delta).unwrap();
            gate!(n, name, a <= prev + 1e-12, "SE AeD rose with age: {prev} -> {a}");
            prev = a;
        }
        // large-age asymptote r^2 / (2 delta), well inside the non-underflow
        // range of g
        let delta = 20.0 * l;
        let tail = k.aed_of_distance(r, delta).unwrap();
        let asym = r * r / (2.0 * delta);
        gate!(n, name, tail < 0.2 * r, "SE AeD does not vanish: {tail} vs r = {r}");
        gate!(
            n,
            name,
            (tail - asym).abs() <= 0.05 * asym,
            "SE AeD tail {tail:.4e} not near its asymptote {asym:.4e}"
        );
    }

    // rational quadratic converges to squared exponential at alpha = beta = 1e4
    let lt = 80.0;
    let ls = 120.0;
    let rq = Kernel::rational_quadratic(1.0, lt, LengthScale::Finite(ls), 1e4, 1e4).unwrap();
    let se = Kernel::squared_exponential(1.0, lt, LengthScale::Finite(ls)).unwrap();
    for _ in 0..500 {
        let dt = rng.gen::<f64>() * 3.0 * lt;
        let r = rng.gen::<f64>() * 3.0 * ls;
        let dg = (rq.g_temporal(dt).unwrap() - se.g_temporal(dt).unwrap()).abs();
        let dh = (rq.h_of_distance(r) - se.h_of_distance(r)).abs();
        gate!(n, name, dg <= 1e-3 && dh <= 1e-3, "RQ vs SE gap g {dg:.2e}, h {dh:.2e}");
    }

    // GP single-sample closed form
    for _ in 0..300 {
        let k = random_kernel(&mut rng);
        let age = rng.gen::<f64>() * 150.0;
        let pos = Position::xy(rng.gen::<f64>() * 120.0, rng.gen::<f64>() * 120.0);
        let set = SampleSet::new(vec![Sample { sensor: 0, position: pos.clone(), time: 500.0 - age }]);
        let got = posterior_variance(&set, &k, &poi, 500.0, 0.0).unwrap().variance;
        let gh = k.g_temporal(age).unwrap() * k.h_spatial(&pos, &poi).unwrap();
        let want = k.sigma2 * (1.0 - gh * gh);
        gate!(
            n,
            name,
            (got - want).abs() <= 1e-10 * k.sigma2 + 1e-9,
            "single-sample closed form off by {}",
            (got - want).abs()
        );
    }

    // monotone information on random sample sets
    for _ in 0..100 {
        let k = random_kernel(&mut rng);
        let mut entries = Vec::new();
        let mut prev = f64::INFINITY;
        for i in 0..6 {
            entries.push(Sample {
                sensor: i,
                position: Position::xy(rng.gen::<f64>() * 150.0, rng.gen::<f64>() * 150.0),
                time: rng.gen::<f64>() * 400.0,
            });
            let v = posterior_variance(&SampleSet::new(entries.clone()), &k, &poi, 400.0, 0.0)
                .unwrap()
                .variance;
            gate!(n, name, v <= prev + 1e-7, "adding a sample raised the variance {prev} -> {v}");
            prev = v;
        }
    }

    // random-AeD closed form vs Monte Carlo sum of the two exponentials
    let (q, p, omega) = (0.01f64, 0.3, 0.2);
    let nu = -(1.0 - q).ln();
    let n_draws = 1_000_000usize;
    let samples: Vec<f64> = (0..n_draws)
        .map(|_| {
            let e1 = -(1.0 - rng.gen::<f64>()).ln() / nu;
            let e2 = -(1.0 - rng.gen::<f64>()).ln() / (p * omega);
            e1 + e2
        })
        .collect();
    for y in [10.0, 30.0, 60.0, 100.0, 200.0] {
        let frac = samples.iter().filter(|&&s| s > y).count() as f64 / n_draws as f64;
        let want = ccdf_2d_random_aed(q, p, omega, y).unwrap();
        let sigma = (want * (1.0 - want) / n_draws as f64).sqrt();
        gate!(
            n,
            name,
            (frac - want).abs() <= 3.0 * sigma + 1e-4,
            "random-AeD CCDF at y = {y}: MC {frac:.5} vs closed form {want:.5}"
        );
    }

    // thinned Poisson sampling retains rate p * omega
    let horizon = 1.0e6;
    let mut t = 0.0;
    let mut kept = 0u64;
    while t < horizon {
        t += -(1.0 - rng.gen::<f64>()).ln() / omega;
        if t < horizon && rng.gen::<f64>() < p {
            kept += 1;
        }
    }
    let rate = kept as f64 / horizon;
    gate!(
        n,
        name,
        (rate - p * omega).abs() <= 0.01 * (p * omega),
        "thinned rate {rate:.5} not within 1% of {}",
        p * omega
    );
    pass(n, name, "all property families hold".into());
}

#[test]
fn criterion_8_provisioning_round_trip() {
    let (n, name) = (8, "provisioning round trip");
    let mut rng = ChaCha12Rng::seed_from_u64(4242);
    let ln3 = 3f64.ln();
    let mut done = 0;
    let mut attempts = 0;
    while done < 1000 {
        attempts += 1;
        gate!(n, name, attempts < 200_000, "could not draw 1000 admissible configurations");
        let y = 10.0 + rng.gen::<f64>() * 40.0;
        let mu2 = 0.5 + rng.gen::<f64>() * 1.5;
        let slack = y - 2.0 * ln3 / mu2;
        if slack <= 0.0 {
            continue;
        }
        let aed = rng.gen::<f64>() * 0.8 * slack;
        let eps = 10f64.powf(-6.0 + 5.0 * rng.gen::<f64>());
        let Ok(mu1) = provision_rate(y, eps, mu2, aed) else { continue };
        let eps_back = 9.0 * (-(mu1 * y + mu2 * (y - aed)) / 2.0).exp();
        gate!(
            n,
            name,
            (eps_back - eps).abs() <= 1e-9 * eps,
            "round trip {eps_back:.3e} vs {eps:.3e} at y = {y:.2}"
        );
        done += 1;
    }

    // the exponential tail bound dominates the exact M|M|1 CCDF at rho = 0.5
    for mu in [0.5, 1.0, 2.0, 5.0] {
        let y0 = 2.0 * ln3 / mu;
        for i in 0..200 {
            let y = y0 + (50.0 - y0) * i as f64 / 199.0;
            let bound = mm1_tail_bound(mu, y).unwrap();
            let exact = ccdf_mm1(0.5 * mu, mu, y).unwrap();
            gate!(
                n,
                name,
                bound >= exact - 1e-12,
                "bound {bound:.6} below exact CCDF {exact:.6} at mu = {mu}, y = {y:.2}"
            );
        }
    }
    pass(n, name, "1000 round trips exact to 1e-9; tail bound dominates on its grid".into());
}

//! Scenario orchestration: config ingestion, parameter sweeps across curves,
//! result persistence (CSV + JSON manifest) and plot-data emission.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{
    ccdf_2d_min, ccdf_predvar_min, mean_from_ccdf, mean_predvar_from_ccdf, quantile_from_ccdf,
    CcdfFn, SensorLink,
};
use crate::error::{Error, Result};
use crate::gp::{mean_posterior_variance_sim, AllSamplesSimConfig};
use crate::kernel::{Kernel, LengthScale, Position, SpatialFamily, TemporalFamily};
use crate::topology::{
    capacity_split, grid_layout, star_layout, CountMode, GridChannel, GridSpec, StarSpec,
};

pub const SCHEMA_VERSION: u32 = 1;

fn default_sigma2() -> f64 {
    1.0
}

/// Kernel section of a scenario config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelCfg {
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    pub l_t: f64,
    /// Finite length scale or the string `"inf"`.
    pub l_s: LsCfg,
    pub temporal: String,
    pub spatial: String,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LsCfg {
    Finite(f64),
    Word(String),
}

impl LsCfg {
    pub fn to_length_scale(&self) -> Result<LengthScale> {
        match self {
            LsCfg::Finite(v) => Ok(LengthScale::Finite(*v)),
            LsCfg::Word(w) if w == "inf" => Ok(LengthScale::Infinite),
            LsCfg::Word(w) => {
                Err(Error::Config(format!("kernel.l_s must be a number or \"inf\", got {w:?}")))
            }
        }
    }
}

impl KernelCfg {
    pub fn build(&self) -> Result<Kernel> {
        let temporal = match self.temporal.as_str() {
            "exponential" => TemporalFamily::Exponential,
            "squared_exponential" => TemporalFamily::SquaredExponential,
            "rational_quadratic" => TemporalFamily::RationalQuadratic {
                beta: self.beta.ok_or_else(|| {
                    Error::Config("kernel.beta is required for rational_quadratic".into())
                })?,
            },
            other => {
                return Err(Error::Config(format!("unknown kernel.temporal {other:?}")));
            }
        };
        let spatial = match self.spatial.as_str() {
            "exponential" => SpatialFamily::Exponential,
            "squared_exponential" => SpatialFamily::SquaredExponential,
            "rational_quadratic" => SpatialFamily::RationalQuadratic {
                alpha: self.alpha.ok_or_else(|| {
                    Error::Config("kernel.alpha is required for rational_quadratic".into())
                })?,
            },
            other => {
                return Err(Error::Config(format!("unknown kernel.spatial {other:?}")));
            }
        };
        Kernel::new(self.sigma2, self.l_t, self.l_s.to_length_scale()?, temporal, spatial)
    }
}

fn default_area_side() -> f64 {
    300.0
}
fn default_capacity() -> f64 {
    10.0
}
fn default_rho() -> f64 {
    0.53
}
fn default_mu_total() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}

/// Topology section of a scenario config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologyCfg {
    Grid {
        d: f64,
        #[serde(default = "default_area_side")]
        area_side: f64,
        s_select: usize,
        #[serde(default = "default_capacity")]
        capacity: f64,
        /// `"mm1"` or `"aloha"`.
        channel_kind: String,
        #[serde(default = "default_rho")]
        rho: f64,
        #[serde(default)]
        count_mode: CountMode,
        #[serde(default = "default_true")]
        floor_mode: bool,
    },
    Star {
        d: f64,
        #[serde(default = "default_mu_total")]
        mu_total: f64,
        mu_center: f64,
        #[serde(default = "default_rho")]
        rho: f64,
    },
}

/// Which quantities to compute per sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Mean minimal 2D-AoI.
    Mean,
    /// `quantile_p` of the minimal 2D-AoI.
    Quantile,
    /// Full CCDF on `ccdf_grid`.
    Ccdf,
    /// Mean minimal normalized prediction variance (best sample per sensor).
    PredvarMean,
    /// All-samples mean prediction variance by windowed GP simulation.
    PredvarSim,
    /// Mean minimal 2D-AoI restricted to tier subsets.
    TierBreakdown,
}

fn default_eta() -> f64 {
    1.0
}
fn default_quantile_p() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisCfg {
    pub targets: Vec<Target>,
    #[serde(default = "default_quantile_p")]
    pub quantile_p: f64,
    #[serde(default)]
    pub ccdf_grid: Vec<f64>,
    /// Noise factor for prediction-variance targets.
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Add rows normalized by each curve's value at the first sweep point.
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCfg {
    /// `"d"`, `"mu_center"`, `"rho"` or `"l_s"`.
    pub variable: String,
    pub values: Vec<f64>,
    /// Golden-section refinement of the discrete mean minimum.
    #[serde(default)]
    pub refine_min: bool,
}

/// One curve of a family plot: a label plus field overrides applied on top
/// of the base config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveCfg {
    pub label: String,
    #[serde(default)]
    pub l_s: Option<LsCfg>,
    #[serde(default)]
    pub d: Option<f64>,
    #[serde(default)]
    pub s_select: Option<usize>,
}

fn default_sim_seeds() -> Vec<u64> {
    vec![1]
}

/// Simulation settings for targets that need a path simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSimCfg {
    /// Retention horizon of the all-samples GP window, in slots.
    pub horizon: f64,
    /// Evaluation instants per seed after warm-up.
    pub n_evals: u64,
    #[serde(default = "default_sim_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub noise_var: f64,
}

fn default_master_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub kernel: KernelCfg,
    pub topology: TopologyCfg,
    pub analysis: AnalysisCfg,
    #[serde(default)]
    pub sweep: Option<SweepCfg>,
    #[serde(default)]
    pub curves: Vec<CurveCfg>,
    #[serde(default)]
    pub sim: Option<ScenarioSimCfg>,
    #[serde(default = "default_master_seed")]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.build().map_err(prefix("kernel"))?;
        if self.analysis.targets.is_empty() {
            return Err(Error::Config("analysis.targets must not be empty".into()));
        }
        if self.analysis.targets.contains(&Target::Quantile)
            && !(self.analysis.quantile_p > 0.0 && self.analysis.quantile_p < 1.0)
        {
            return Err(Error::Config(format!(
                "analysis.quantile_p must be in (0, 1), got {}",
                self.analysis.quantile_p
            )));
        }
        if !(self.analysis.eta > 0.0 && self.analysis.eta <= 1.0) {
            return Err(Error::Config(format!(
                "analysis.eta must be in (0, 1], got {}",
                self.analysis.eta
            )));
        }
        if let Some(sweep) = &self.sweep {
            sweep_variable(&sweep.variable)?;
            if sweep.values.is_empty() {
                return Err(Error::Config("sweep.values must not be empty".into()));
            }
        }
        if self.analysis.targets.contains(&Target::PredvarSim) {
            let sim = self
                .sim
                .as_ref()
                .ok_or_else(|| Error::Config("predvar_sim requires a [sim] section".into()))?;
            if sim.seeds.is_empty() || sim.n_evals == 0 || !(sim.horizon > 0.0) {
                return Err(Error::Config(
                    "sim.seeds, sim.n_evals and sim.horizon must be positive".into(),
                ));
            }
        }
        if self.analysis.targets.contains(&Target::TierBreakdown)
            && !matches!(self.topology, TopologyCfg::Grid { .. })
        {
            return Err(Error::Config("tier_breakdown requires a grid topology".into()));
        }
        // probe one resolved point so bad topology values surface before a run
        let sweep_val = self.sweep.as_ref().map(|s| s.values[0]);
        let curve = self.curves.first();
        resolve_point(self, curve, sweep_val).map_err(prefix("topology"))?;
        Ok(())
    }
}

fn prefix(key: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Config(msg) => Error::Config(format!("{key}: {msg}")),
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SweepVar {
    D,
    MuCenter,
    Rho,
    Ls,
}

fn sweep_variable(name: &str) -> Result<SweepVar> {
    match name {
        "d" => Ok(SweepVar::D),
        "mu_center" => Ok(SweepVar::MuCenter),
        "rho" => Ok(SweepVar::Rho),
        "l_s" => Ok(SweepVar::Ls),
        other => Err(Error::Config(format!(
            "sweep.variable must be one of d, mu_center, rho, l_s; got {other:?}"
        ))),
    }
}

/// A fully resolved evaluation point: kernel, links and point of interest.
struct ResolvedPoint {
    kernel: Kernel,
    links: Vec<SensorLink>,
    poi: Position,
    /// Tier label per link (grid only).
    tiers: Option<Vec<u8>>,
    /// Slotted-ALOHA budget per sensor, when applicable.
    q: Option<f64>,
}

fn resolve_point(
    cfg: &ScenarioConfig,
    curve: Option<&CurveCfg>,
    sweep_val: Option<f64>,
) -> Result<ResolvedPoint> {
    let sweep_var = match (&cfg.sweep, sweep_val) {
        (Some(s), Some(_)) => Some(sweep_variable(&s.variable)?),
        _ => None,
    };
    let mut kernel_cfg = cfg.kernel.clone();
    if let Some(c) = curve {
        if let Some(ls) = &c.l_s {
            kernel_cfg.l_s = ls.clone();
        }
    }
    if sweep_var == Some(SweepVar::Ls) {
        kernel_cfg.l_s = LsCfg::Finite(sweep_val.unwrap());
    }
    let kernel = kernel_cfg.build()?;

    match &cfg.topology {
        TopologyCfg::Grid { d, area_side, s_select, capacity, channel_kind, rho, count_mode, floor_mode } => {
            let mut d = *d;
            let mut s_select = *s_select;
            let mut rho = *rho;
            if let Some(c) = curve {
                if let Some(cd) = c.d {
                    d = cd;
                }
                if let Some(cs) = c.s_select {
                    s_select = cs;
                }
            }
            match sweep_var {
                Some(SweepVar::D) => d = sweep_val.unwrap(),
                Some(SweepVar::Rho) => rho = sweep_val.unwrap(),
                Some(SweepVar::MuCenter) => {
                    return Err(Error::Config("mu_center sweep needs a star topology".into()));
                }
                _ => {}
            }
            let channel = match channel_kind.as_str() {
                "mm1" => GridChannel::Mm1 { rho },
                "aloha" => GridChannel::Aloha { floor_mode: *floor_mode },
                other => {
                    return Err(Error::Config(format!(
                        "topology.channel_kind must be mm1 or aloha, got {other:?}"
                    )));
                }
            };
            let mut spec = GridSpec {
                d,
                area_side: *area_side,
                s_select,
                capacity: *capacity,
                channel,
                count_mode: *count_mode,
            };
            // wide selections are capped once the area runs out of sensors
            spec.s_select = spec.s_select.min(spec.n_in_area().max(1));
            let channel_model = capacity_split(&spec)?;
            let sites = grid_layout(&spec)?;
            let tiers = sites.iter().map(|s| s.tier).collect();
            let links = sites
                .into_iter()
                .enumerate()
                .map(|(index, s)| SensorLink {
                    index,
                    position: s.position,
                    channel: channel_model.clone(),
                })
                .collect();
            let q = match channel_model {
                crate::channel::ChannelModel::SlottedAloha { q, .. } => Some(q),
                _ => None,
            };
            Ok(ResolvedPoint {
                kernel,
                links,
                poi: Position::xy(0.0, 0.0),
                tiers: Some(tiers),
                q,
            })
        }
        TopologyCfg::Star { d, mu_total, mu_center, rho } => {
            let mut d = *d;
            let mut mu_center = *mu_center;
            if let Some(c) = curve {
                if let Some(cd) = c.d {
                    d = cd;
                }
            }
            match sweep_var {
                Some(SweepVar::D) => d = sweep_val.unwrap(),
                Some(SweepVar::MuCenter) => mu_center = sweep_val.unwrap(),
                Some(SweepVar::Rho) => {
                    return Err(Error::Config("rho sweep is only supported for grids".into()));
                }
                _ => {}
            }
            let (links, poi) =
                star_layout(&StarSpec { d, mu_total: *mu_total, mu_center, rho: *rho })?;
            Ok(ResolvedPoint { kernel, links, poi, tiers: None, q: None })
        }
    }
}

/// One computed value of a scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub curve: String,
    pub sweep: f64,
    pub metric: String,
    pub analytic: Option<f64>,
    pub sim: Option<f64>,
    pub sim_stderr: Option<f64>,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub schema_version: u32,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn all_succeeded(&self) -> bool {
        self.rows.iter().all(|r| r.note.is_empty())
    }

    pub fn get(&self, curve: &str, sweep: f64, metric: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| {
            r.curve == curve && (r.sweep - sweep).abs() < 1e-9 && r.metric == metric
        })
    }

    /// Rows of one curve and metric, sorted by sweep value.
    pub fn curve_rows(&self, curve: &str, metric: &str) -> Vec<&ResultRow> {
        let mut rows: Vec<&ResultRow> = self
            .rows
            .iter()
            .filter(|r| r.curve == curve && r.metric == metric)
            .collect();
        rows.sort_by(|a, b| a.sweep.total_cmp(&b.sweep));
        rows
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["curve", "sweep", "metric", "analytic", "sim", "sim_stderr", "note"])
            .map_err(|e| Error::Numeric(format!("csv write failed: {e}")))?;
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
        for r in &self.rows {
            wtr.write_record([
                r.curve.clone(),
                format!("{}", r.sweep),
                r.metric.clone(),
                fmt(r.analytic),
                fmt(r.sim),
                fmt(r.sim_stderr),
                r.note.clone(),
            ])
            .map_err(|e| Error::Numeric(format!("csv write failed: {e}")))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Execution options shared by the CLI and the test harness.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub refine_min: bool,
}

/// Runs all (curve, sweep point) tasks of a scenario, writing `results.csv`,
/// `manifest.json` and per-curve plot files when an output directory is set.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<ResultTable> {
    cfg.validate()?;
    let master_seed = opts.seed.unwrap_or(cfg.seed);
    let refine = opts.refine_min || cfg.sweep.as_ref().is_some_and(|s| s.refine_min);

    let curves: Vec<Option<&CurveCfg>> = if cfg.curves.is_empty() {
        vec![None]
    } else {
        cfg.curves.iter().map(Some).collect()
    };
    let sweep_values: Vec<Option<f64>> = match &cfg.sweep {
        Some(s) => s.values.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let tasks: Vec<(usize, Option<&CurveCfg>, Option<f64>)> = curves
        .iter()
        .flat_map(|c| sweep_values.iter().map(move |v| (*c, *v)))
        .enumerate()
        .map(|(i, (c, v))| (i, c, v))
        .collect();

    let run_tasks = || -> Vec<ResultRow> {
        tasks
            .par_iter()
            .flat_map(|(index, curve, sweep_val)| {
                let seed = point_seed(master_seed, *index);
                eval_point(cfg, *curve, *sweep_val, seed)
            })
            .collect()
    };
    let mut rows = match opts.workers {
        Some(workers) if workers > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?
            .install(run_tasks),
        _ => run_tasks(),
    };
    rows.sort_by(|a, b| {
        a.curve.cmp(&b.curve).then(a.metric.cmp(&b.metric)).then(a.sweep.total_cmp(&b.sweep))
    });

    let mut table = ResultTable { schema_version: SCHEMA_VERSION, rows };
    if refine {
        refine_minima(cfg, &mut table);
    }
    if cfg.analysis.normalize {
        normalize_rows(&mut table);
    }

    if let Some(dir) = &opts.out_dir {
        persist(cfg, &table, dir, master_seed)?;
    }
    Ok(table)
}

/// Deterministic per-task seed derived from the master seed.
fn point_seed(master: u64, index: usize) -> u64 {
    master ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn curve_label(curve: Option<&CurveCfg>) -> String {
    curve.map(|c| c.label.clone()).unwrap_or_else(|| "base".into())
}

fn eval_point(
    cfg: &ScenarioConfig,
    curve: Option<&CurveCfg>,
    sweep_val: Option<f64>,
    seed: u64,
) -> Vec<ResultRow> {
    let label = curve_label(curve);
    let sweep = sweep_val.unwrap_or(0.0);
    let mut rows = Vec::new();
    let fail = |metric: &str, e: &Error, rows: &mut Vec<ResultRow>| {
        rows.push(ResultRow {
            curve: label.clone(),
            sweep,
            metric: metric.into(),
            analytic: Some(f64::NAN),
            sim: None,
            sim_stderr: None,
            note: e.to_string(),
        });
    };
    let point = match resolve_point(cfg, curve, sweep_val) {
        Ok(p) => p,
        Err(e) => {
            fail("point", &e, &mut rows);
            return rows;
        }
    };
    let ok = |metric: String, analytic: f64| ResultRow {
        curve: label.clone(),
        sweep,
        metric,
        analytic: Some(analytic),
        sim: None,
        sim_stderr: None,
        note: String::new(),
    };
    for target in &cfg.analysis.targets {
        match target {
            Target::Mean => {
                match ccdf_2d_min(&point.links, &point.kernel, &point.poi)
                    .and_then(|f| mean_from_ccdf(&f))
                {
                    Ok(m) => rows.push(ok("mean_2d_aoi".into(), m)),
                    Err(e) => fail("mean_2d_aoi", &e, &mut rows),
                }
            }
            Target::Quantile => {
                let p = cfg.analysis.quantile_p;
                match ccdf_2d_min(&point.links, &point.kernel, &point.poi)
                    .and_then(|f| quantile_from_ccdf(&f, p))
                {
                    Ok(v) => rows.push(ok(format!("quantile_{p}"), v)),
                    Err(e) => fail(&format!("quantile_{p}"), &e, &mut rows),
                }
            }
            Target::Ccdf => match ccdf_2d_min(&point.links, &point.kernel, &point.poi) {
                Ok(f) => {
                    let grid = ccdf_grid(cfg, &f);
                    for y in grid {
                        rows.push(ok(format!("ccdf@{y}"), f.eval(y)));
                    }
                }
                Err(e) => fail("ccdf", &e, &mut rows),
            },
            Target::PredvarMean => {
                match ccdf_predvar_min(&point.links, &point.kernel, &point.poi, cfg.analysis.eta)
                    .and_then(|f| mean_predvar_from_ccdf(&f))
                {
                    Ok(v) => rows.push(ok("predvar_mean".into(), v)),
                    Err(e) => fail("predvar_mean", &e, &mut rows),
                }
            }
            Target::PredvarSim => match predvar_sim(cfg, &point, seed) {
                Ok((mean, stderr)) => rows.push(ResultRow {
                    curve: label.clone(),
                    sweep,
                    metric: "predvar_allsamples_sim".into(),
                    analytic: None,
                    sim: Some(mean),
                    sim_stderr: Some(stderr),
                    note: String::new(),
                }),
                Err(e) => fail("predvar_allsamples_sim", &e, &mut rows),
            },
            Target::TierBreakdown => match tier_breakdown_rows(&point, &label, sweep) {
                Ok(mut trs) => rows.append(&mut trs),
                Err(e) => fail("tier_breakdown", &e, &mut rows),
            },
        }
    }
    rows
}

fn ccdf_grid(cfg: &ScenarioConfig, f: &CcdfFn) -> Vec<f64> {
    if !cfg.analysis.ccdf_grid.is_empty() {
        return cfg.analysis.ccdf_grid.clone();
    }
    // default: 20 points from the support to the 0.999 quantile
    let lo = f.support_lo();
    let hi = quantile_from_ccdf(f, 0.999).unwrap_or(lo + 1.0).max(lo + 1.0);
    (1..=20).map(|i| lo + (hi - lo) * i as f64 / 20.0).collect()
}

fn predvar_sim(cfg: &ScenarioConfig, point: &ResolvedPoint, seed: u64) -> Result<(f64, f64)> {
    let sim = cfg.sim.as_ref().ok_or_else(|| Error::Config("missing [sim] section".into()))?;
    let q = point
        .q
        .ok_or_else(|| Error::Config("predvar_sim requires an ALOHA grid channel".into()))?;
    let positions: Vec<Position> = point.links.iter().map(|l| l.position.clone()).collect();
    let mut gp_cfg = AllSamplesSimConfig::with_horizon(sim.horizon);
    gp_cfg.n_evals = sim.n_evals;
    gp_cfg.noise_var = sim.noise_var;
    let runs: Vec<Result<(f64, f64)>> = sim
        .seeds
        .par_iter()
        .map(|s| {
            mean_posterior_variance_sim(
                &positions,
                &point.poi,
                &point.kernel,
                q,
                &gp_cfg,
                seed ^ s.wrapping_mul(0x9E37_79B9_7F4A_7C15),
            )
        })
        .collect();
    let mut means = Vec::new();
    for r in runs {
        means.push(r?.0);
    }
    let n = means.len() as f64;
    let mean = means.iter().sum::<f64>() / n;
    let var = means.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok((mean, (var / n).sqrt()))
}

fn tier_breakdown_rows(point: &ResolvedPoint, label: &str, sweep: f64) -> Result<Vec<ResultRow>> {
    let tiers =
        point.tiers.as_ref().ok_or_else(|| Error::Config("tier labels need a grid".into()))?;
    let subsets: [(&str, &[u8]); 5] = [
        ("tier1", &[1]),
        ("tier2", &[2]),
        ("tier3", &[3]),
        ("tier12", &[1, 2]),
        ("tier123", &[1, 2, 3]),
    ];
    let mut rows = Vec::new();
    for (name, wanted) in subsets {
        let links: Vec<SensorLink> = point
            .links
            .iter()
            .zip(tiers)
            .filter(|(_, t)| wanted.contains(t))
            .map(|(l, _)| l.clone())
            .collect();
        if links.is_empty() {
            continue;
        }
        let mean = mean_from_ccdf(&ccdf_2d_min(&links, &point.kernel, &point.poi)?)?;
        rows.push(ResultRow {
            curve: label.to_string(),
            sweep,
            metric: format!("mean_2d_aoi_{name}"),
            analytic: Some(mean),
            sim: None,
            sim_stderr: None,
            note: String::new(),
        });
    }
    // AeD of the closest tier-2 sensors at zero age, as a reference line
    if let Some(pos) = point
        .links
        .iter()
        .zip(tiers)
        .filter(|(_, t)| **t == 2)
        .map(|(l, _)| &l.position)
        .next()
    {
        let aed = point.kernel.aed(pos, &point.poi, 0.0)?;
        rows.push(ResultRow {
            curve: label.to_string(),
            sweep,
            metric: "tier2_aed".into(),
            analytic: Some(aed),
            sim: None,
            sim_stderr: None,
            note: String::new(),
        });
    }
    Ok(rows)
}

/// Golden-section refinement of the per-curve discrete mean minimum; adds
/// `mean_min_refined` rows at the refined sweep location.
fn refine_minima(cfg: &ScenarioConfig, table: &mut ResultTable) {
    let Some(sweep) = &cfg.sweep else { return };
    let labels: Vec<String> = if cfg.curves.is_empty() {
        vec!["base".into()]
    } else {
        cfg.curves.iter().map(|c| c.label.clone()).collect()
    };
    let mut extra = Vec::new();
    for label in labels {
        let rows = table.curve_rows(&label, "mean_2d_aoi");
        let finite: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|r| r.analytic.filter(|v| v.is_finite()).map(|v| (r.sweep, v)))
            .collect();
        if finite.len() < 3 {
            continue;
        }
        let arg = finite
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map(|(i, _)| i)
            .unwrap();
        if arg == 0 || arg == finite.len() - 1 {
            continue;
        }
        let (mut a, mut b) = (finite[arg - 1].0, finite[arg + 1].0);
        let curve = cfg.curves.iter().find(|c| c.label == label);
        let f = |v: f64| -> f64 {
            resolve_point(cfg, curve, Some(v))
                .and_then(|p| ccdf_2d_min(&p.links, &p.kernel, &p.poi))
                .and_then(|c| mean_from_ccdf(&c))
                .unwrap_or(f64::INFINITY)
        };
        let phi = 0.5 * (5.0f64.sqrt() - 1.0);
        let mut x1 = b - phi * (b - a);
        let mut x2 = a + phi * (b - a);
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..40 {
            if b - a < 1e-4 * b.abs().max(1.0) {
                break;
            }
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi * (b - a);
                f1 = f(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi * (b - a);
                f2 = f(x2);
            }
        }
        let (xm, fm) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
        let _ = sweep;
        extra.push(ResultRow {
            curve: label,
            sweep: xm,
            metric: "mean_min_refined".into(),
            analytic: Some(fm),
            sim: None,
            sim_stderr: None,
            note: String::new(),
        });
    }
    table.rows.extend(extra);
}

/// Adds `<metric>_norm` rows dividing each curve by its value at the first
/// sweep point of that curve and metric.
fn normalize_rows(table: &mut ResultTable) {
    let mut keys: Vec<(String, String)> = table
        .rows
        .iter()
        .filter(|r| r.analytic.is_some() && !r.metric.ends_with("_norm"))
        .map(|r| (r.curve.clone(), r.metric.clone()))
        .collect();
    keys.sort();
    keys.dedup();
    let mut extra = Vec::new();
    for (curve, metric) in keys {
        let rows = table.curve_rows(&curve, &metric);
        let Some(base) = rows.first().and_then(|r| r.analytic).filter(|v| *v > 0.0) else {
            continue;
        };
        for r in rows {
            if let Some(v) = r.analytic {
                extra.push(ResultRow {
                    curve: curve.clone(),
                    sweep: r.sweep,
                    metric: format!("{metric}_norm"),
                    analytic: Some(v / base),
                    sim: None,
                    sim_stderr: None,
                    note: r.note.clone(),
                });
            }
        }
    }
    table.rows.extend(extra);
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    name: String,
    package_version: String,
    master_seed: u64,
    config: ScenarioConfig,
    outputs: Vec<String>,
}

fn persist(cfg: &ScenarioConfig, table: &ResultTable, dir: &Path, master_seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let results = dir.join("results.csv");
    table.write_csv(std::fs::File::create(&results)?)?;
    let mut outputs = vec!["results.csv".to_string()];
    outputs.extend(emit_plotdata(table, dir)?);
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        name: cfg.name.clone(),
        package_version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed,
        config: cfg.clone(),
        outputs,
    };
    let f = std::fs::File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(f, &manifest)
        .map_err(|e| Error::Numeric(format!("manifest write failed: {e}")))?;
    Ok(())
}

/// Writes one CSV per (curve, metric family) and returns the file names.
/// Sweep metrics get `sweep,<metric>` columns; CCDF metrics get
/// `y,ccdf_analytic,ccdf_sim,sim_stderr`.
pub fn emit_plotdata(table: &ResultTable, dir: &Path) -> Result<Vec<String>> {
    if table.rows.is_empty() {
        return Err(Error::Config("result table is empty".into()));
    }
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut keys: Vec<(String, String)> = table
        .rows
        .iter()
        .map(|r| {
            let family = if r.metric.starts_with("ccdf@") {
                "ccdf".to_string()
            } else {
                r.metric.clone()
            };
            (r.curve.clone(), family)
        })
        .collect();
    keys.sort();
    keys.dedup();
    for (curve, family) in keys {
        let fname = format!("{}_{}.csv", sanitize(&curve), sanitize(&family));
        let mut wtr = csv::Writer::from_writer(std::fs::File::create(dir.join(&fname))?);
        let err = |e: csv::Error| Error::Numeric(format!("csv write failed: {e}"));
        if family == "ccdf" {
            wtr.write_record(["y", "ccdf_analytic", "ccdf_sim", "sim_stderr"]).map_err(err)?;
            let mut rows: Vec<&ResultRow> = table
                .rows
                .iter()
                .filter(|r| r.curve == curve && r.metric.starts_with("ccdf@"))
                .collect();
            rows.sort_by(|a, b| {
                let ya: f64 = a.metric[5..].parse().unwrap_or(f64::NAN);
                let yb: f64 = b.metric[5..].parse().unwrap_or(f64::NAN);
                ya.total_cmp(&yb)
            });
            for r in rows {
                let y = &r.metric[5..];
                wtr.write_record([
                    y.to_string(),
                    r.analytic.map(|v| format!("{v:.12e}")).unwrap_or_default(),
                    r.sim.map(|v| format!("{v:.12e}")).unwrap_or_default(),
                    r.sim_stderr.map(|v| format!("{v:.12e}")).unwrap_or_default(),
                ])
                .map_err(err)?;
            }
        } else {
            wtr.write_record(["sweep", family.as_str()]).map_err(err)?;
            for r in table.curve_rows(&curve, &family) {
                let v = r.analytic.or(r.sim);
                wtr.write_record([
                    format!("{}", r.sweep),
                    v.map(|x| format!("{x:.12e}")).unwrap_or_default(),
                ])
                .map_err(err)?;
            }
        }
        wtr.flush()?;
        files.push(fname);
    }
    Ok(files)
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

/// Names of the built-in presets.
pub fn preset_names() -> Vec<&'static str> {
    vec!["fig5a", "star", "table1", "appendixE"]
}

/// A built-in scenario preset.
pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let ls_curves = || {
        vec![
            CurveCfg { label: "ls64".into(), l_s: Some(LsCfg::Finite(64.0)), d: None, s_select: None },
            CurveCfg { label: "ls128".into(), l_s: Some(LsCfg::Finite(128.0)), d: None, s_select: None },
            CurveCfg { label: "ls256".into(), l_s: Some(LsCfg::Finite(256.0)), d: None, s_select: None },
            CurveCfg { label: "ls512".into(), l_s: Some(LsCfg::Finite(512.0)), d: None, s_select: None },
            CurveCfg {
                label: "lsinf".into(),
                l_s: Some(LsCfg::Word("inf".into())),
                d: None,
                s_select: None,
            },
        ]
    };
    let exp_kernel = |l_s: LsCfg| KernelCfg {
        sigma2: 1.0,
        l_t: 128.0,
        l_s,
        temporal: "exponential".into(),
        spatial: "exponential".into(),
        beta: None,
        alpha: None,
    };
    match name {
        // mean 2D-AoI over sensor distance for M|M|1 grids, one curve per
        // spatial length scale
        "fig5a" => Ok(ScenarioConfig {
            name: "fig5a".into(),
            kernel: exp_kernel(LsCfg::Finite(128.0)),
            topology: TopologyCfg::Grid {
                d: 34.0,
                area_side: 300.0,
                s_select: 16,
                capacity: 10.0,
                channel_kind: "mm1".into(),
                rho: 0.53,
                count_mode: CountMode::Padded,
                floor_mode: true,
            },
            analysis: AnalysisCfg {
                targets: vec![Target::Mean],
                quantile_p: 0.9,
                ccdf_grid: vec![],
                eta: 1.0,
                normalize: false,
            },
            sweep: Some(SweepCfg {
                variable: "d".into(),
                values: (1..=100).map(|d| d as f64).collect(),
                refine_min: false,
            }),
            curves: ls_curves(),
            sim: None,
            seed: 1,
        }),
        // rate split between a center sensor and four leaves, seen from one
        // leaf; curves over the leaf distance
        "star" => Ok(ScenarioConfig {
            name: "star".into(),
            kernel: exp_kernel(LsCfg::Finite(128.0)),
            topology: TopologyCfg::Star { d: 5.0, mu_total: 1.0, mu_center: 0.5, rho: 0.53 },
            analysis: AnalysisCfg {
                targets: vec![Target::Mean, Target::Quantile],
                quantile_p: 0.9,
                ccdf_grid: vec![],
                eta: 1.0,
                normalize: true,
            },
            sweep: Some(SweepCfg {
                variable: "mu_center".into(),
                values: (0..=100).map(|i| i as f64 / 100.0).collect(),
                refine_min: false,
            }),
            curves: [0.0, 5.0, 25.0, 50.0]
                .iter()
                .map(|&d| CurveCfg {
                    label: format!("d{d}"),
                    l_s: None,
                    d: Some(d),
                    s_select: None,
                })
                .collect(),
            sim: None,
            seed: 1,
        }),
        // mean prediction variance at d = 40 for the ALOHA grid: analytic
        // best-sample value and simulated all-samples value per length scale
        "table1" => Ok(ScenarioConfig {
            name: "table1".into(),
            kernel: exp_kernel(LsCfg::Finite(128.0)),
            topology: TopologyCfg::Grid {
                d: 40.0,
                area_side: 300.0,
                s_select: 16,
                capacity: 10.0,
                channel_kind: "aloha".into(),
                rho: 0.53,
                count_mode: CountMode::Padded,
                floor_mode: true,
            },
            analysis: AnalysisCfg {
                targets: vec![Target::PredvarMean, Target::PredvarSim],
                quantile_p: 0.9,
                ccdf_grid: vec![],
                eta: 1.0,
                normalize: false,
            },
            sweep: None,
            curves: ls_curves(),
            sim: Some(ScenarioSimCfg {
                horizon: 1000.0,
                n_evals: 2500,
                seeds: (1..=20).collect(),
                noise_var: 0.0,
            }),
            seed: 1,
        }),
        // ALOHA grid distance sweep with tier contributions, for the wide
        // and narrow monitor selections
        "appendixE" => Ok(ScenarioConfig {
            name: "appendixE".into(),
            kernel: exp_kernel(LsCfg::Finite(128.0)),
            topology: TopologyCfg::Grid {
                d: 24.0,
                area_side: 300.0,
                s_select: 36,
                capacity: 10.0,
                channel_kind: "aloha".into(),
                rho: 0.53,
                count_mode: CountMode::Padded,
                floor_mode: true,
            },
            analysis: AnalysisCfg {
                targets: vec![Target::Mean],
                quantile_p: 0.9,
                ccdf_grid: vec![],
                eta: 1.0,
                normalize: false,
            },
            sweep: Some(SweepCfg {
                variable: "d".into(),
                values: (10..=100).map(|d| d as f64).collect(),
                refine_min: true,
            }),
            curves: vec![
                CurveCfg { label: "s36".into(), l_s: None, d: None, s_select: Some(36) },
                CurveCfg { label: "s16".into(), l_s: None, d: None, s_select: Some(16) },
            ],
            sim: None,
            seed: 1,
        }),
        other => Err(Error::Config(format!(
            "unknown preset {other:?}; available: {}",
            preset_names().join(", ")
        ))),
    }
}

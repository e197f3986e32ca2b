//! Trace-driven cost experiments: group selection, strategy planning,
//! windowed replay, and pooled cost statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heuristics;
use crate::indirect::{effective_direct_model, LayeredModel};
use crate::par;
use crate::planner::{
    build_reduced_lp, build_reduced_lp_from_weights, extract_cache_vector, CacheVector,
};
use crate::sim::estimate::{estimate_probabilities, select_groups};
use crate::sim::replay::{copcash, replay, target_user, SharingMode};
use crate::sim::trace::IntervalizedTrace;

/// Shape of groups to sample: near-uniform meeting expectations, or a
/// pronounced spread between best- and worst-connected members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupMode {
    Symmetric,
    Asymmetric,
}

impl GroupMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupMode::Symmetric => "symmetric",
            GroupMode::Asymmetric => "asymmetric",
        }
    }
}

/// Caching strategies the harness can replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "optimal")]
    Optimal,
    #[serde(rename = "algcov")]
    AlgCov,
    #[serde(rename = "iad")]
    Iad,
    #[serde(rename = "1/n")]
    OneOverN,
    #[serde(rename = "copcash")]
    CopCash,
    #[serde(rename = "target-set")]
    TargetSet,
    #[serde(rename = "full-download")]
    FullDownload,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Optimal => "optimal",
            Strategy::AlgCov => "algcov",
            Strategy::Iad => "iad",
            Strategy::OneOverN => "1/n",
            Strategy::CopCash => "copcash",
            Strategy::TargetSet => "target-set",
            Strategy::FullDownload => "full-download",
        }
    }

    pub fn all() -> Vec<Strategy> {
        vec![
            Strategy::Optimal,
            Strategy::AlgCov,
            Strategy::Iad,
            Strategy::OneOverN,
            Strategy::CopCash,
            Strategy::TargetSet,
            Strategy::FullDownload,
        ]
    }
}

fn default_group_size() -> usize {
    6
}
fn default_group_trials() -> usize {
    50
}
fn default_th_asym() -> f64 {
    1.3
}
fn default_th_sym() -> f64 {
    0.2
}
fn default_th_max() -> f64 {
    1.2
}
fn default_interval_seconds() -> f64 {
    900.0
}
fn default_sharing_mode() -> SharingMode {
    SharingMode::Direct
}
fn default_group_mode() -> GroupMode {
    GroupMode::Symmetric
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Users per group (N).
    #[serde(default = "default_group_size")]
    pub group_size: usize,
    /// Deadlines to sweep, in sharing intervals.
    pub deadlines_intervals: Vec<usize>,
    /// Number of sampled groups pooled into each reported mean.
    #[serde(default = "default_group_trials")]
    pub group_trials: usize,
    /// Minimum expectation deviation for an asymmetric group.
    #[serde(default = "default_th_asym")]
    pub th_asym: f64,
    /// Maximum expectation deviation for a symmetric group.
    #[serde(default = "default_th_sym")]
    pub th_sym: f64,
    /// Minimum best expected cluster size for a symmetric group.
    #[serde(default = "default_th_max")]
    pub th_max: f64,
    /// Wall-clock length of one sharing interval.
    #[serde(default = "default_interval_seconds")]
    pub interval_seconds: f64,
    #[serde(default = "default_sharing_mode")]
    pub sharing_mode: SharingMode,
    #[serde(default = "default_group_mode")]
    pub group_mode: GroupMode,
    #[serde(default = "Strategy::all")]
    pub strategies: Vec<Strategy>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            group_size: default_group_size(),
            deadlines_intervals: vec![1],
            group_trials: default_group_trials(),
            th_asym: default_th_asym(),
            th_sym: default_th_sym(),
            th_max: default_th_max(),
            interval_seconds: default_interval_seconds(),
            sharing_mode: default_sharing_mode(),
            group_mode: default_group_mode(),
            strategies: Strategy::all(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.group_size == 0 {
            return Err(Error::invalid("group_size must be positive"));
        }
        if self.group_size > 16 {
            return Err(Error::Capacity {
                what: "experiment group size",
                limit: 16,
                requested: self.group_size,
            });
        }
        if self.deadlines_intervals.is_empty() {
            return Err(Error::invalid("at least one deadline is required"));
        }
        if self.deadlines_intervals.iter().any(|&d| d == 0) {
            return Err(Error::invalid("deadlines must be at least one interval"));
        }
        if self.group_trials == 0 {
            return Err(Error::invalid("group_trials must be positive"));
        }
        if self.strategies.is_empty() {
            return Err(Error::invalid("at least one strategy is required"));
        }
        for (name, v) in [
            ("th_asym", self.th_asym),
            ("th_sym", self.th_sym),
            ("th_max", self.th_max),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("{name} must be finite and nonnegative")));
            }
        }
        if !self.interval_seconds.is_finite() || self.interval_seconds <= 0.0 {
            return Err(Error::invalid("interval_seconds must be positive"));
        }
        Ok(())
    }
}

/// One pooled measurement: a strategy replayed at one deadline.
#[derive(Debug, Clone, Serialize)]
pub struct CostRow {
    pub strategy: String,
    pub deadline_sec: f64,
    pub mode: String,
    pub mean_cost: f64,
    pub stderr: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
}

impl CostReport {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("strategy,deadline_sec,mode,mean_cost,stderr,trials\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{}\n",
                r.strategy, r.deadline_sec, r.mode, r.mean_cost, r.stderr, r.trials
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Stat {
    count: usize,
    sum: f64,
    sumsq: f64,
}

impl Stat {
    fn push(&mut self, v: f64) {
        self.count += 1;
        self.sum += v;
        self.sumsq += v * v;
    }

    fn merge(&mut self, other: Stat) {
        self.count += other.count;
        self.sum += other.sum;
        self.sumsq += other.sumsq;
    }

    fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    fn stderr(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let var = ((self.sumsq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

/// Runs the full protocol: sample qualifying groups, estimate each
/// group's meeting probabilities per deadline, plan every strategy's
/// cache vector, replay all deadline windows, and pool costs across
/// groups and windows. Group trials run in parallel; results are
/// merged in group order, so output is independent of thread count.
pub fn run_experiment(cfg: &ExperimentConfig, itrace: &IntervalizedTrace) -> Result<CostReport> {
    cfg.validate()?;
    let groups = select_groups(itrace, cfg)?;
    let mut stats: Vec<Vec<Stat>> =
        vec![vec![Stat::default(); cfg.strategies.len()]; cfg.deadlines_intervals.len()];
    for (di, &d) in cfg.deadlines_intervals.iter().enumerate() {
        let windows = itrace.num_intervals() / d;
        if windows == 0 {
            return Err(Error::invalid(format!(
                "trace of {} intervals has no complete {d}-interval window",
                itrace.num_intervals()
            )));
        }
        let per_group: Vec<Vec<Stat>> = par::try_map_indexed(groups.len(), |gi| {
            run_group(cfg, itrace, &groups[gi], d, windows)
                .map_err(|e| e.with_context(format!("group trial {gi}, deadline {d} intervals")))
        })?;
        for group_stats in per_group {
            for (si, s) in group_stats.into_iter().enumerate() {
                stats[di][si].merge(s);
            }
        }
    }
    let mut rows = Vec::with_capacity(cfg.strategies.len() * cfg.deadlines_intervals.len());
    for (si, strat) in cfg.strategies.iter().enumerate() {
        for (di, &d) in cfg.deadlines_intervals.iter().enumerate() {
            let s = &stats[di][si];
            rows.push(CostRow {
                strategy: strat.as_str().to_string(),
                deadline_sec: d as f64 * cfg.interval_seconds,
                mode: cfg.sharing_mode.as_str().to_string(),
                mean_cost: s.mean(),
                stderr: s.stderr(),
                trials: s.count,
            });
        }
    }
    Ok(CostReport { rows })
}

fn run_group(
    cfg: &ExperimentConfig,
    itrace: &IntervalizedTrace,
    group: &[usize],
    d: usize,
    windows: usize,
) -> Result<Vec<Stat>> {
    let pm = estimate_probabilities(itrace, group, d)?;
    let mode = cfg.sharing_mode;
    let planned: Vec<Option<CacheVector>> = cfg
        .strategies
        .iter()
        .map(|&s| plan_strategy(s, cfg, itrace, group, &pm, d))
        .collect::<Result<_>>()?;
    let mut stats = vec![Stat::default(); cfg.strategies.len()];
    for w in 0..windows {
        let start = w * d;
        for (si, &strat) in cfg.strategies.iter().enumerate() {
            let cost = match (strat, &planned[si]) {
                (Strategy::CopCash, _) => copcash(itrace, group, start, d, mode)?,
                (Strategy::FullDownload, _) => group.len() as f64,
                (_, Some(x)) => replay(itrace, group, x, start, d, mode)?,
                (_, None) => unreachable!("planned vector missing"),
            };
            stats[si].push(cost);
        }
    }
    Ok(stats)
}

/// Cache vector a strategy commits to before the window starts, or
/// `None` for strategies that act only during replay. The optimal
/// strategy plans against the estimated window matrix in direct mode;
/// in indirect mode it plans against relay-aware reach weights built
/// from the per-interval matrix.
fn plan_strategy(
    strat: Strategy,
    cfg: &ExperimentConfig,
    itrace: &IntervalizedTrace,
    group: &[usize],
    pm: &crate::prob::ProbabilityMatrix,
    d: usize,
) -> Result<Option<CacheVector>> {
    let n = group.len();
    let x = match strat {
        Strategy::CopCash | Strategy::FullDownload => return Ok(None),
        Strategy::Optimal => {
            let lp = match cfg.sharing_mode {
                SharingMode::Direct => build_reduced_lp(pm)?,
                SharingMode::Indirect => {
                    let per_interval = estimate_probabilities(itrace, group, 1)?;
                    let model = LayeredModel::homogeneous(per_interval, d)?;
                    let (_, weights) = effective_direct_model(&model)?;
                    build_reduced_lp_from_weights(&weights)?
                }
            };
            let solution = lp.solve()?;
            extract_cache_vector(&solution, n)?
        }
        Strategy::AlgCov => heuristics::algcov(pm)?.x,
        Strategy::Iad => heuristics::iad(pm).x,
        Strategy::OneOverN => CacheVector::uniform(n, 1.0 / n as f64)?,
        Strategy::TargetSet => {
            let mut values = vec![0.0; n];
            values[target_user(pm)] = 1.0;
            CacheVector::new(values)?
        }
    };
    Ok(Some(x))
}

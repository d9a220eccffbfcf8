//! Config-driven experiments: dataset generation, training, ground-truth
//! evaluation and tidy CSV output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_gen::{make_ground_truth, sample_demonstrations, sample_preferences, GroundTruth};
use crate::envs::{load_env, Environment};
use crate::error::{AihfError, Result};
use crate::io::write_json;
use crate::mdp::{DemonstrationSet, PreferenceSet};
use crate::reward::{reward_table, RewardParams};
use crate::rng::Seed;
use crate::soft_rl::{l3_objective_table, soft_policy_evaluation, SoftPolicy, DEFAULT_TOL};
use crate::static_choice::{
    aihf_estimator, direct_aihf_static, rlhf_policy, run_example2, sample_static_datasets, selfplay_aihf_static,
    sft_estimator, softmax_choice, ChoiceDistribution, Example2Config, Example2Report, StaticChoiceProblem,
};
use crate::static_choice::example2_reward;
use crate::train::{train_aihf, train_irl_only, train_rlhf, train_sft, GradientMode, TrainingConfig, TrainingTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Aihf,
    Rlhf,
    Sft,
    Irl,
    DirectAihf,
    SelfplayAihf,
    StaticSft,
    StaticRlhf,
    StaticAihf,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Aihf => "aihf",
            Method::Rlhf => "rlhf",
            Method::Sft => "sft",
            Method::Irl => "irl",
            Method::DirectAihf => "direct-aihf",
            Method::SelfplayAihf => "selfplay-aihf",
            Method::StaticSft => "static-sft",
            Method::StaticRlhf => "static-rlhf",
            Method::StaticAihf => "static-aihf",
        }
    }

    pub fn is_static(self) -> bool {
        matches!(self, Method::DirectAihf | Method::SelfplayAihf | Method::StaticSft | Method::StaticRlhf | Method::StaticAihf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// KL-regularized value under the true reward, reference `pi0`.
    TrueValue,
    /// Discounted return under the true reward, no regularization.
    TrueReturn,
    /// Mean over states of the total-variation distance to the expert
    /// (static problems: distance to the true choice distribution).
    TvToExpert,
    /// Occupancy-weighted `KL(pi || pi0)`.
    KlToRef,
    /// Pearson correlation between learned and true reward tables.
    RewardCorrelation,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::TrueValue => "true_value",
            Metric::TrueReturn => "true_return",
            Metric::TvToExpert => "tv_to_expert",
            Metric::KlToRef => "kl_to_ref",
            Metric::RewardCorrelation => "reward_correlation",
        }
    }

    pub fn all() -> Vec<Metric> {
        vec![Metric::TrueValue, Metric::TrueReturn, Metric::TvToExpert, Metric::KlToRef, Metric::RewardCorrelation]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    /// `(|D|, |P|)` settings; one block of cells per entry.
    pub ratios: Vec<(usize, usize)>,
    pub n_tiers: usize,
    /// Tiers compared in preference pairs, weakest first.
    pub tier_pair: (usize, usize),
    pub beta_pref: f64,
    /// Trajectory length; `None` uses the environment default.
    pub length: Option<usize>,
    /// Static problems: comparisons per unordered pair.
    pub prefs_per_pair: u64,
    /// Static problems: actions that appear in demonstrations.
    pub coverage: Option<Vec<usize>>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            ratios: vec![(100, 100)],
            n_tiers: 3,
            tier_pair: (0, 1),
            beta_pref: 1.0,
            length: Some(50),
            prefs_per_pair: 200,
            coverage: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub name: String,
    /// A shipped environment name, an environment file, or `example2` for
    /// the static coverage problem.
    pub environment: String,
    pub dataset: DatasetSpec,
    pub methods: Vec<Method>,
    pub training: TrainingConfig,
    /// Demonstration weight; `None` uses `|D| / |P|`.
    pub w1: Option<f64>,
    /// Divide the step size by `1 + w1`, i.e. ascend `(w1 L1 + L2) / (1 + w1)`.
    pub normalize_step: bool,
    pub metrics: Vec<Metric>,
    pub repeats: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Keep per-cell training traces in the report.
    pub keep_traces: bool,
    /// Iteration budgets for a full-batch rate study on the first ratio's
    /// data; empty skips it.
    pub rate_ks: Vec<usize>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            name: "experiment".into(),
            environment: "gridworld5x5".into(),
            dataset: DatasetSpec::default(),
            methods: vec![Method::Aihf, Method::Rlhf],
            training: TrainingConfig { k: 300, gradient_mode: GradientMode::FullBatch, ..TrainingConfig::default() },
            w1: None,
            normalize_step: true,
            metrics: Metric::all(),
            repeats: 1,
            seed: 0,
            output_dir: None,
            keep_traces: false,
            rate_ks: Vec::new(),
        }
    }
}

impl ExperimentSpec {
    /// Reads TOML, or JSON when the file ends in `.json`.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        if path.as_ref().extension().is_some_and(|e| e == "json") {
            Ok(serde_json::from_str(&text)?)
        } else {
            Ok(toml::from_str(&text)?)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(AihfError::Config("repeats must be at least 1".into()));
        }
        if self.methods.is_empty() || self.dataset.ratios.is_empty() {
            return Err(AihfError::Config("methods and dataset ratios must be non-empty".into()));
        }
        let is_static = self.environment == "example2";
        if is_static && !self.rate_ks.is_empty() {
            return Err(AihfError::Config("a rate study needs an MDP environment".into()));
        }
        if let Some(m) = self.methods.iter().find(|m| m.is_static() != is_static) {
            return Err(AihfError::Config(format!("method {} does not apply to environment {}", m.name(), self.environment)));
        }
        Ok(())
    }

    fn w1_for(&self, n_demos: usize, n_prefs: usize) -> f64 {
        self.w1.unwrap_or(if n_prefs == 0 { 1.0 } else { n_demos as f64 / n_prefs as f64 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub index: usize,
    pub method: Method,
    pub n_demos: usize,
    pub n_prefs: usize,
    pub repeat: usize,
    /// `None` marks a metric that does not apply or failed to evaluate.
    pub metrics: BTreeMap<String, Option<f64>>,
    pub error: Option<String>,
    pub trace: Option<TrainingTrace>,
    /// Set by [`write_run`]: trace CSV path relative to the run directory.
    pub trace_file: Option<String>,
    #[serde(skip)]
    pub wall_clock: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub n_demos: usize,
    pub n_prefs: usize,
    pub metric: String,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub cells: Vec<CellReport>,
    pub summary: Vec<SummaryRow>,
    pub example2: Option<Example2Report>,
    pub rate_study: Option<RateStudy>,
    #[serde(skip)]
    pub wall_clock: Duration,
}

impl RunReport {
    pub fn metrics_csv(&self) -> String {
        let names: Vec<String> =
            self.cells.iter().flat_map(|c| c.metrics.keys().cloned()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        let mut out = format!("index,method,n_demos,n_prefs,repeat,{},error\n", names.join(","));
        for c in &self.cells {
            let vals: Vec<String> =
                names.iter().map(|n| c.metrics.get(n).copied().flatten().map_or("NA".into(), |v| v.to_string())).collect();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.index,
                c.method.name(),
                c.n_demos,
                c.n_prefs,
                c.repeat,
                vals.join(","),
                c.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
            ));
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let f = |v: Option<f64>| v.map_or("NA".to_string(), |x| x.to_string());
        let mut out = String::from("method,n_demos,n_prefs,metric,mean,std,count\n");
        for r in &self.summary {
            out.push_str(&format!("{},{},{},{},{},{},{}\n", r.method.name(), r.n_demos, r.n_prefs, r.metric, f(r.mean), f(r.std), r.count));
        }
        out
    }

    pub fn mean(&self, method: Method, n_demos: usize, n_prefs: usize, metric: Metric) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.method == method && r.n_demos == n_demos && r.n_prefs == n_prefs && r.metric == metric.name())
            .and_then(|r| r.mean)
    }
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let sab: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let saa: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let sbb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if saa == 0.0 || sbb == 0.0 {
        None
    } else {
        Some(sab / (saa * sbb).sqrt())
    }
}

/// Ground-truth metrics of a policy (and optionally a learned reward).
pub fn evaluate_policy(
    env: &Environment,
    gt: &GroundTruth,
    policy: &SoftPolicy,
    theta: Option<&RewardParams>,
    metrics: &[Metric],
) -> BTreeMap<String, Option<f64>> {
    let table = reward_table(&env.theta_star, &env.fmap).ok();
    let mut out = BTreeMap::new();
    for &m in metrics {
        let v = match m {
            Metric::TrueValue => {
                table.as_ref().and_then(|t| l3_objective_table(&env.mdp, t, policy, &env.pi0, env.beta, DEFAULT_TOL).ok())
            }
            Metric::TrueReturn => table.as_ref().and_then(|t| {
                soft_policy_evaluation(&env.mdp, t, policy, policy, env.beta, DEFAULT_TOL)
                    .ok()
                    .map(|v| env.mdp.initial_dist().iter().zip(&v.v).map(|(p, x)| p * x).sum())
            }),
            Metric::TvToExpert => {
                let tv = policy.per_state_tv(&gt.expert_policy);
                Some(tv.iter().sum::<f64>() / tv.len() as f64)
            }
            Metric::KlToRef => policy.kl_per_state(&env.pi0).ok().map(|kl| {
                let d = env.mdp.state_occupancy_from(policy, env.mdp.initial_dist());
                let z: f64 = d.iter().sum();
                d.iter().zip(&kl).map(|(w, k)| w * k).sum::<f64>() / z
            }),
            Metric::RewardCorrelation => theta.and_then(|th| {
                let learned = reward_table(th, &env.fmap).ok()?;
                pearson(&learned, table.as_ref()?)
            }),
        };
        out.insert(m.name().to_string(), v);
    }
    out
}

struct Cell {
    index: usize,
    method: Method,
    ratio: (usize, usize),
    repeat: usize,
}

fn cell_seed(spec: &ExperimentSpec, ratio: (usize, usize), repeat: usize) -> Seed {
    Seed(spec.seed).split(ratio.0 as u64 * 1_000_003 + ratio.1 as u64).split(repeat as u64)
}

fn cell_data(
    spec: &ExperimentSpec,
    env: &Environment,
    gt: &GroundTruth,
    (nd, np): (usize, usize),
    seed: Seed,
) -> Result<(DemonstrationSet, PreferenceSet)> {
    let length = spec.dataset.length.unwrap_or_else(|| env.mdp.default_rollout_length());
    let demos = if nd > 0 { sample_demonstrations(gt, &env.mdp, nd, length, seed.split(0))? } else { Default::default() };
    let prefs = sample_preferences(gt, &env.mdp, np, length, spec.dataset.tier_pair, spec.dataset.beta_pref, seed.split(1))?;
    Ok((demos, prefs))
}

fn run_mdp_cell(spec: &ExperimentSpec, env: &Environment, gt: &GroundTruth, cell: &Cell) -> Result<(BTreeMap<String, Option<f64>>, Option<TrainingTrace>)> {
    let (nd, np) = cell.ratio;
    let data_seed = cell_seed(spec, cell.ratio, cell.repeat);
    let (demos, prefs) = cell_data(spec, env, gt, cell.ratio, data_seed)?;
    let w1 = spec.w1_for(nd, np);
    let mut cfg = TrainingConfig { w1, beta: env.beta, seed: data_seed.split(2), ..spec.training.clone() };
    if spec.normalize_step {
        cfg.alpha0 /= 1.0 + w1;
    }
    let (policy, theta, trace) = match cell.method {
        Method::Aihf => {
            let out = train_aihf(&env.mdp, &env.fmap, &demos, &prefs, &env.pi0, &cfg)?;
            (out.policy, Some(out.theta), Some(out.trace))
        }
        Method::Irl => {
            let cfg = TrainingConfig { w1: 1.0, alpha0: spec.training.alpha0, ..cfg };
            let out = train_irl_only(&env.mdp, &env.fmap, &demos, &env.pi0, &cfg)?;
            (out.policy, Some(out.theta), Some(out.trace))
        }
        Method::Rlhf => {
            let out = train_rlhf(&env.mdp, &env.fmap, &demos, &prefs, &env.pi0, &cfg)?;
            (out.policy, Some(out.theta), None)
        }
        Method::Sft => (train_sft(&env.mdp, &demos, &env.pi0)?, None, None),
        other => return Err(AihfError::Config(format!("{} is a static method", other.name()))),
    };
    let metrics = evaluate_policy(env, gt, &policy, theta.as_ref(), &spec.metrics);
    Ok((metrics, if spec.keep_traces { trace } else { None }))
}

fn run_static_cell(spec: &ExperimentSpec, problem: &StaticChoiceProblem, cell: &Cell) -> Result<BTreeMap<String, Option<f64>>> {
    let (nd, _) = cell.ratio;
    let data_seed = cell_seed(spec, cell.ratio, cell.repeat);
    let coverage = spec.dataset.coverage.as_deref();
    let counts = sample_static_datasets(problem, nd as u64, spec.dataset.prefs_per_pair, coverage, data_seed)?;
    let truth = softmax_choice(problem);
    let beta = problem.beta;
    let w1 = spec.w1.unwrap_or_else(|| {
        let p = counts.total_prefs();
        if p == 0 { 1.0 } else { counts.total_demos() as f64 / p as f64 }
    });
    let pi0 = ChoiceDistribution::uniform(problem.n_actions());
    let pi = match cell.method {
        Method::StaticSft => sft_estimator(&counts)?,
        Method::StaticRlhf => rlhf_policy(&counts, beta)?,
        Method::StaticAihf => aihf_estimator(&counts, beta)?.policy,
        Method::DirectAihf => direct_aihf_static(&counts, &pi0, w1, beta)?,
        Method::SelfplayAihf => selfplay_aihf_static(&counts, &pi0, w1, beta)?,
        other => return Err(AihfError::Config(format!("{} is not a static method", other.name()))),
    };
    let mut m = BTreeMap::new();
    for &metric in &spec.metrics {
        let v = match metric {
            Metric::TvToExpert => Some(pi.tv(&truth)),
            _ => None,
        };
        m.insert(metric.name().to_string(), v);
    }
    Ok(m)
}

fn summarize(cells: &[CellReport]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Method, usize, usize, String), Vec<Option<f64>>> = BTreeMap::new();
    for c in cells {
        for (k, v) in &c.metrics {
            groups.entry((c.method, c.n_demos, c.n_prefs, k.clone())).or_default().push(*v);
        }
    }
    groups
        .into_iter()
        .map(|((method, n_demos, n_prefs, metric), vals)| {
            let present: Vec<f64> = vals.iter().flatten().copied().collect();
            let count = present.len();
            let mean = (count > 0).then(|| present.iter().sum::<f64>() / count as f64);
            let std = mean.filter(|_| count > 1).map(|m| (present.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt());
            SummaryRow { method, n_demos, n_prefs, metric, mean, std, count }
        })
        .collect()
}

/// Runs every (ratio, repeat, method) cell on a pool of `jobs` threads and
/// merges results by cell index. Failed cells keep their diagnostic and do
/// not stop the others.
pub fn run_experiment(spec: &ExperimentSpec, jobs: usize) -> Result<RunReport> {
    spec.validate()?;
    let start = Instant::now();
    let mut cells = Vec::new();
    for &ratio in &spec.dataset.ratios {
        for repeat in 0..spec.repeats {
            for &method in &spec.methods {
                cells.push(Cell { index: cells.len(), method, ratio, repeat });
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| AihfError::Config(e.to_string()))?;
    let is_static = spec.environment == "example2";
    let mut rate = None;
    let mut reports: Vec<CellReport> = if is_static {
        let problem = StaticChoiceProblem::new(example2_reward(50), 1.0)?;
        pool.install(|| {
            cells
                .par_iter()
                .map(|cell| {
                    let t0 = Instant::now();
                    let res = run_static_cell(spec, &problem, cell);
                    finish_cell(spec, cell, res.map(|m| (m, None)), t0)
                })
                .collect()
        })
    } else {
        let env = load_env(&spec.environment)?;
        let gt = make_ground_truth(&env.mdp, &env.theta_star, &env.fmap, &env.pi0, env.beta, spec.dataset.n_tiers)?;
        if !spec.rate_ks.is_empty() {
            let ratio = spec.dataset.ratios[0];
            let (demos, prefs) = cell_data(spec, &env, &gt, ratio, cell_seed(spec, ratio, 0))?;
            let w1 = spec.w1_for(ratio.0, ratio.1);
            let base = TrainingConfig { w1, ..spec.training.clone() };
            rate = Some(pool.install(|| rate_study(&env, &demos, &prefs, &base, &spec.rate_ks))?);
        }
        pool.install(|| {
            cells
                .par_iter()
                .map(|cell| {
                    let t0 = Instant::now();
                    finish_cell(spec, cell, run_mdp_cell(spec, &env, &gt, cell), t0)
                })
                .collect()
        })
    };
    reports.sort_by_key(|c| c.index);
    let example2 = if is_static && spec.methods.contains(&Method::StaticAihf) {
        let cov = spec.dataset.coverage.as_ref().map_or(45, |c| c.len());
        let (nd, _) = spec.dataset.ratios[0];
        let cfg = Example2Config { covered: cov, n_demos: nd as u64, prefs_per_pair: spec.dataset.prefs_per_pair, ..Example2Config::default() };
        pool.install(|| run_example2(Seed(spec.seed), spec.repeats, &cfg)).ok()
    } else {
        None
    };
    Ok(RunReport {
        name: spec.name.clone(),
        seed: spec.seed,
        summary: summarize(&reports),
        cells: reports,
        example2,
        rate_study: rate,
        wall_clock: start.elapsed(),
    })
}

fn finish_cell(
    spec: &ExperimentSpec,
    cell: &Cell,
    res: Result<(BTreeMap<String, Option<f64>>, Option<TrainingTrace>)>,
    t0: Instant,
) -> CellReport {
    let (metrics, trace, error) = match res {
        Ok((m, t)) => (m, t, None),
        Err(e) => (spec.metrics.iter().map(|m| (m.name().to_string(), None)).collect(), None, Some(e.to_string())),
    };
    CellReport {
        index: cell.index,
        method: cell.method,
        n_demos: cell.ratio.0,
        n_prefs: cell.ratio.1,
        repeat: cell.repeat,
        metrics,
        error,
        trace,
        trace_file: None,
        wall_clock: t0.elapsed(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub version: String,
    pub seed: u64,
    pub spec: ExperimentSpec,
}

/// Writes `manifest.json`, `report.json`, `metrics.csv`, `summary.csv` and
/// one `traces/cell_<index>.csv` per kept trace.
pub fn write_run(dir: impl AsRef<Path>, spec: &ExperimentSpec, report: &RunReport) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let manifest = Manifest { name: spec.name.clone(), version: env!("CARGO_PKG_VERSION").into(), seed: spec.seed, spec: spec.clone() };
    write_json(dir.join("manifest.json"), &manifest)?;
    let mut report = report.clone();
    for c in &mut report.cells {
        if let Some(t) = &c.trace {
            let rel = format!("traces/cell_{}.csv", c.index);
            std::fs::create_dir_all(dir.join("traces"))?;
            std::fs::write(dir.join(&rel), t.to_csv())?;
            c.trace_file = Some(rel);
        }
    }
    write_json(dir.join("report.json"), &report)?;
    std::fs::write(dir.join("metrics.csv"), report.metrics_csv())?;
    std::fs::write(dir.join("summary.csv"), report.summary_csv())?;
    Ok(())
}

/// Averages of the monitored quantities for a set of iteration budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudy {
    pub ks: Vec<usize>,
    pub mean_grad_norm_sq: Vec<f64>,
    pub mean_policy_gap: Vec<f64>,
}

/// Least-squares line through `(x, y)`: `(slope, intercept, r2)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

impl RateStudy {
    /// Log-log fits `(slope, r2)` for the gradient and policy-gap averages.
    pub fn fits(&self) -> ((f64, f64), (f64, f64)) {
        let lk: Vec<f64> = self.ks.iter().map(|&k| (k as f64).ln()).collect();
        let lg: Vec<f64> = self.mean_grad_norm_sq.iter().map(|v| v.ln()).collect();
        let lp: Vec<f64> = self.mean_policy_gap.iter().map(|v| v.ln()).collect();
        let (s1, _, r1) = fit_line(&lk, &lg);
        let (s2, _, r2) = fit_line(&lk, &lp);
        ((s1, r1), (s2, r2))
    }
}

/// Full-batch training with exact monitoring for each budget in `ks`.
pub fn rate_study(
    env: &Environment,
    demos: &DemonstrationSet,
    prefs: &PreferenceSet,
    base: &TrainingConfig,
    ks: &[usize],
) -> Result<RateStudy> {
    let runs: Vec<Result<(f64, f64)>> = ks
        .par_iter()
        .map(|&k| {
            let cfg = TrainingConfig { k, gradient_mode: GradientMode::FullBatch, record_exact: true, beta: env.beta, ..base.clone() };
            let out = train_aihf(&env.mdp, &env.fmap, demos, prefs, &env.pi0, &cfg)?;
            let g = out.trace.mean_grad_norm_sq().ok_or(AihfError::Degenerate("empty trace".into()))?;
            let p = out.trace.mean_policy_gap().ok_or(AihfError::Degenerate("empty trace".into()))?;
            Ok((g, p))
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(RateStudy {
        ks: ks.to_vec(),
        mean_grad_norm_sq: runs.iter().map(|r| r.0).collect(),
        mean_policy_gap: runs.iter().map(|r| r.1).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    LearningCurve,
    PolicyHistogram,
    RateFit,
}

impl std::str::FromStr for PlotKind {
    type Err = AihfError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learning-curve" => Ok(PlotKind::LearningCurve),
            "policy-histogram" => Ok(PlotKind::PolicyHistogram),
            "rate-fit" => Ok(PlotKind::RateFit),
            other => Err(AihfError::Config(format!("unknown plot kind {other:?}"))),
        }
    }
}

/// Tidy CSV for one plot kind.
///
/// * `learning-curve`: `cell,method,n_demos,n_prefs,repeat,k,alpha,grad_norm,exact_grad_norm_sq,policy_gap,l1,l2,total`
/// * `policy-histogram`: `action,method,mean,std`
/// * `rate-fit`: `k,log_k,log_mean_grad_norm_sq,log_mean_policy_gap,slope_grad,r2_grad,slope_gap,r2_gap`
pub fn plot_csv(report: &RunReport, kind: PlotKind) -> Result<String> {
    match kind {
        PlotKind::LearningCurve => {
            let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
            let mut out = String::from("cell,method,n_demos,n_prefs,repeat,k,alpha,grad_norm,exact_grad_norm_sq,policy_gap,l1,l2,total\n");
            let mut any = false;
            for c in &report.cells {
                let Some(trace) = &c.trace else { continue };
                any = true;
                for r in &trace.records {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                        c.index,
                        c.method.name(),
                        c.n_demos,
                        c.n_prefs,
                        c.repeat,
                        r.k,
                        r.alpha,
                        r.grad_norm,
                        opt(r.exact_grad_norm_sq),
                        opt(r.policy_gap),
                        opt(r.l1),
                        opt(r.l2),
                        opt(r.total)
                    ));
                }
            }
            if !any {
                return Err(AihfError::Config("report carries no training traces".into()));
            }
            Ok(out)
        }
        PlotKind::PolicyHistogram => report
            .example2
            .as_ref()
            .map(|e| e.to_csv())
            .ok_or_else(|| AihfError::Config("report carries no choice histogram".into())),
        PlotKind::RateFit => {
            let rs = report.rate_study.as_ref().ok_or_else(|| AihfError::Config("report carries no rate study".into()))?;
            let ((sg, rg), (sp, rp)) = rs.fits();
            let mut out = String::from("k,log_k,log_mean_grad_norm_sq,log_mean_policy_gap,slope_grad,r2_grad,slope_gap,r2_gap\n");
            for i in 0..rs.ks.len() {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    rs.ks[i],
                    (rs.ks[i] as f64).ln(),
                    rs.mean_grad_norm_sq[i].ln(),
                    rs.mean_policy_gap[i].ln(),
                    sg,
                    rg,
                    sp,
                    rp
                ));
            }
            Ok(out)
        }
    }
}

/// Writes [`plot_csv`] to `<dir>/<kind>.csv` and returns the path.
pub fn emit_plot_data(report: &RunReport, kind: PlotKind, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let csv = plot_csv(report, kind)?;
    std::fs::create_dir_all(dir.as_ref())?;
    let name = match kind {
        PlotKind::LearningCurve => "learning-curve.csv",
        PlotKind::PolicyHistogram => "policy-histogram.csv",
        PlotKind::RateFit => "rate-fit.csv",
    };
    let path = dir.as_ref().join(name);
    std::fs::write(&path, csv)?;
    Ok(path)
}

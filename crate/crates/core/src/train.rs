//! Alternating reward/policy training and the two-stage baselines.

use serde::{Deserialize, Serialize};

use crate::error::{AihfError, Result};
use crate::losses::{
    l1_direction_for_policy, l1_loss_for_policy, CompiledPreferences, LossConfig, TemperatureScale, Visitation,
};
use crate::mdp::{sample_trajectory, DemoOccupancy, DemonstrationSet, PreferenceSet, TabularMdp};
use crate::reward::{feature_expectation, reward_gradient_table, reward_table, FeatureMap, RewardParams};
use crate::rng::Seed;
use crate::soft_rl::{
    optimal_soft_policy, soft_policy_iteration_step, soft_value_iteration_from, SoftPolicy, SoftValues,
    DEFAULT_MAX_ITER, DEFAULT_TOL,
};

/// Parameter norm beyond which training aborts.
pub const DIVERGENCE_NORM: f64 = 1e8;

/// How the policy follows the reward between gradient steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InnerMode {
    /// `pi_{k+1} ∝ pi0 exp(Q^soft_{r_k, pi_k} / beta)`.
    #[default]
    OnePolicyIterationStep,
    /// Soft value iteration to `tol`, warm-started.
    FullSoftVi { tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Mini-batch samples of demonstrations, agent rollouts and preferences.
    #[default]
    Stochastic,
    /// Exact expectations: the agent term from the occupancy of `pi_{k+1}`
    /// and the preference term over the whole set.
    FullBatch,
}

/// Reward-model fitting in the RLHF baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RmMode {
    /// Full-batch ascent with backtracking until the gradient norm drops below `grad_tol`.
    LineSearch { grad_tol: f64, max_iter: usize },
    /// `K` steps of size `alpha0 / K^sigma` with the same centering as the joint trainer.
    FixedStep,
}

impl Default for RmMode {
    fn default() -> Self {
        RmMode::LineSearch { grad_tol: 1e-8, max_iter: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub k: usize,
    pub alpha0: f64,
    pub sigma_exp: f64,
    pub w1: f64,
    pub beta: f64,
    pub btl_scale: TemperatureScale,
    pub l1_scale: TemperatureScale,
    pub inner_mode: InnerMode,
    pub gradient_mode: GradientMode,
    /// Expert/agent trajectory pairs per step.
    pub demo_batch: usize,
    pub pref_batch: usize,
    /// Rollout length for agent samples; `None` uses the MDP default.
    pub rollout_length: Option<usize>,
    /// Subtract the mean reward over data-visited pairs after each step (one-hot features only).
    pub center: bool,
    /// Record exact `||grad L(theta_k)||^2`, the policy gap and losses (solves the inner problem each step).
    pub record_exact: bool,
    pub rm_mode: RmMode,
    pub tol: f64,
    pub seed: Seed,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            k: 500,
            alpha0: 1.0,
            sigma_exp: 0.5,
            w1: 1.0,
            beta: 1.0,
            btl_scale: TemperatureScale::InverseBeta,
            l1_scale: TemperatureScale::InverseBeta,
            inner_mode: InnerMode::OnePolicyIterationStep,
            gradient_mode: GradientMode::Stochastic,
            demo_batch: 16,
            pref_batch: 16,
            rollout_length: None,
            center: true,
            record_exact: false,
            rm_mode: RmMode::default(),
            tol: DEFAULT_TOL,
            seed: Seed(0),
        }
    }
}

impl TrainingConfig {
    pub fn loss_config(&self) -> LossConfig {
        LossConfig { w1: self.w1, beta: self.beta, btl_scale: self.btl_scale, l1_scale: self.l1_scale }
    }

    /// `alpha0 / K^sigma`.
    pub fn step_size(&self) -> f64 {
        self.alpha0 / (self.k.max(1) as f64).powf(self.sigma_exp)
    }

    pub fn validate(&self) -> Result<()> {
        self.loss_config().validate()?;
        if !(self.alpha0 > 0.0) {
            return Err(AihfError::Config(format!("alpha0 = {} must be positive", self.alpha0)));
        }
        if !(self.sigma_exp > 0.0 && self.sigma_exp < 1.0) {
            return Err(AihfError::Config(format!("sigma_exp = {} must lie in (0, 1)", self.sigma_exp)));
        }
        if !(self.tol > 0.0) {
            return Err(AihfError::Config("tol must be positive".into()));
        }
        if self.gradient_mode == GradientMode::Stochastic && (self.demo_batch == 0 || self.pref_batch == 0) {
            return Err(AihfError::Config("batch sizes must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub alpha: f64,
    /// FNV-1a hash of the bit patterns of `theta_k`.
    pub theta_hash: u64,
    pub grad_norm: f64,
    pub exact_grad_norm_sq: Option<f64>,
    /// `||log pi_{k+1} - log pi_{theta_k}||_inf`.
    pub policy_gap: Option<f64>,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub total: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainingTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn theta_hashes(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.theta_hash).collect()
    }

    /// `(1/K) sum_k ||grad L(theta_k)||^2`, if recorded.
    pub fn mean_grad_norm_sq(&self) -> Option<f64> {
        mean(self.records.iter().map(|r| r.exact_grad_norm_sq))
    }

    /// `(1/K) sum_k ||log pi_{k+1} - log pi_{theta_k}||_inf`, if recorded.
    pub fn mean_policy_gap(&self) -> Option<f64> {
        mean(self.records.iter().map(|r| r.policy_gap))
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let mut out = String::from("k,alpha,theta_hash,grad_norm,exact_grad_norm_sq,policy_gap,l1,l2,total\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{:016x},{},{},{},{},{},{}\n",
                r.k,
                r.alpha,
                r.theta_hash,
                r.grad_norm,
                opt(r.exact_grad_norm_sq),
                opt(r.policy_gap),
                opt(r.l1),
                opt(r.l2),
                opt(r.total)
            ));
        }
        out
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    let v = v?;
    if v.is_empty() {
        return None;
    }
    Some(v.iter().sum::<f64>() / v.len() as f64)
}

pub fn theta_hash(theta: &RewardParams) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for x in &theta.theta {
        for b in x.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

#[derive(Debug, Clone)]
pub struct TrainingOutput {
    pub theta: RewardParams,
    pub policy: SoftPolicy,
    pub trace: TrainingTrace,
}

/// Data-visited `(s,a)` entries, used as the centering set.
fn reached_entries(fmap: &FeatureMap, demos: &DemonstrationSet, prefs: &PreferenceSet) -> Vec<usize> {
    let mut seen = vec![false; fmap.n_states * fmap.n_actions];
    let trajs = demos.trajectories.iter().chain(prefs.pairs.iter().flat_map(|p| [&p.winner, &p.loser]));
    for t in trajs {
        for &(s, a) in &t.steps {
            if s < fmap.n_states && a < fmap.n_actions {
                seen[s * fmap.n_actions + a] = true;
            }
        }
    }
    let out: Vec<usize> = (0..seen.len()).filter(|&i| seen[i]).collect();
    if out.is_empty() {
        (0..seen.len()).collect()
    } else {
        out
    }
}

/// Shifts every entry by the mean over `reached`; a uniform shift leaves
/// soft-optimal policies unchanged.
fn center(theta: &mut [f64], reached: &[usize]) {
    let m = reached.iter().map(|&i| theta[i]).sum::<f64>() / reached.len() as f64;
    theta.iter_mut().for_each(|x| *x -= m);
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn log_gap(a: &SoftPolicy, b: &SoftPolicy) -> f64 {
    let mut worst: f64 = 0.0;
    for (ra, rb) in a.probs.iter().zip(&b.probs) {
        for (&x, &y) in ra.iter().zip(rb) {
            if x == 0.0 && y == 0.0 {
                continue;
            }
            worst = worst.max((x.ln() - y.ln()).abs());
        }
    }
    worst
}

struct Context<'a> {
    mdp: &'a TabularMdp,
    fmap: &'a FeatureMap,
    pi0: &'a SoftPolicy,
    demo_occ: Option<DemoOccupancy>,
    demo_visits: Vec<Visitation>,
    prefs: CompiledPreferences,
    reached: Vec<usize>,
    loss: LossConfig,
}

/// Full-batch ascent direction of the reward objective at `theta` with the
/// agent term taken under `policy`.
fn full_batch_direction(ctx: &Context, theta: &RewardParams, table: &[f64], policy: &SoftPolicy) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = ctx.fmap.dim;
    let g1 = match (&ctx.demo_occ, ctx.loss.w1 > 0.0) {
        (Some(occ), true) => l1_direction_for_policy(ctx.mdp, theta, ctx.fmap, occ, policy, &ctx.loss)?,
        _ => vec![0.0; dim],
    };
    let g2 = if ctx.prefs.is_empty() {
        vec![0.0; dim]
    } else {
        let grads = reward_gradient_table(theta, ctx.fmap)?;
        let w = ctx.prefs.gradient_weights(table, &ctx.loss, 0..ctx.prefs.len())?;
        feature_expectation(&grads, &w, dim)
    };
    Ok((g1, g2))
}

fn combine(w1: f64, g1: &[f64], g2: &[f64]) -> Vec<f64> {
    if w1 == 0.0 {
        return g2.to_vec();
    }
    g1.iter().zip(g2).map(|(a, b)| w1 * a + b).collect()
}

fn stochastic_direction(
    ctx: &Context,
    cfg: &TrainingConfig,
    theta: &RewardParams,
    table: &[f64],
    policy: &SoftPolicy,
    seed: Seed,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n_entries = ctx.fmap.n_states * ctx.fmap.n_actions;
    let grads = reward_gradient_table(theta, ctx.fmap)?;
    let mut w1_weights = vec![0.0; n_entries];
    if ctx.loss.w1 > 0.0 && !ctx.demo_visits.is_empty() {
        let length = cfg.rollout_length.unwrap_or_else(|| ctx.mdp.default_rollout_length());
        let k = ctx.loss.l1_scale.factor(ctx.loss.beta) / cfg.demo_batch as f64;
        let mut pick = seed.split(0).rng();
        for b in 0..cfg.demo_batch {
            let e = &ctx.demo_visits[pick.index(ctx.demo_visits.len())];
            let agent = sample_trajectory(ctx.mdp, policy, length, seed.split(1).split(b as u64))?;
            e.add_scaled(&mut w1_weights, k);
            Visitation::from_trajectory(&agent, ctx.fmap.n_actions, ctx.mdp.gamma()).add_scaled(&mut w1_weights, -k);
        }
    }
    let g1 = feature_expectation(&grads, &w1_weights, ctx.fmap.dim);
    let g2 = if ctx.prefs.is_empty() {
        vec![0.0; ctx.fmap.dim]
    } else {
        let mut pick = seed.split(2).rng();
        let idx: Vec<usize> = (0..cfg.pref_batch).map(|_| pick.index(ctx.prefs.len())).collect();
        let w = ctx.prefs.gradient_weights(table, &ctx.loss, idx)?;
        feature_expectation(&grads, &w, ctx.fmap.dim)
    };
    Ok((g1, g2))
}

/// Soft-optimal policy for a reward table, warm-started from `warm`.
fn solve_optimal(
    ctx: &Context,
    table: &[f64],
    tol: f64,
    warm: &mut Option<SoftValues>,
) -> Result<SoftPolicy> {
    let init = warm.clone().unwrap_or_else(|| SoftValues::zeros(ctx.mdp.n_states(), ctx.mdp.n_actions(), ctx.loss.beta));
    let sol = soft_value_iteration_from(ctx.mdp, table, ctx.pi0, ctx.loss.beta, tol, DEFAULT_MAX_ITER, &init)?;
    if !sol.converged {
        return Err(AihfError::NoConvergence { iterations: sol.iterations, residual: sol.residual });
    }
    let pi = optimal_soft_policy(&sol.values, ctx.pi0, ctx.loss.beta);
    *warm = Some(sol.values);
    Ok(pi)
}

/// Alternating reward and policy updates on a tabular MDP.
///
/// Each iteration aligns the policy with the current reward (one soft
/// policy-iteration step or a full soft solve), forms an ascent direction
/// `w1 g1 + g2` and takes a step of size `alpha0 / K^sigma`. The returned
/// policy is the soft-optimal policy of the final reward.
pub fn train_aihf(
    mdp: &TabularMdp,
    fmap: &FeatureMap,
    demos: &DemonstrationSet,
    prefs: &PreferenceSet,
    pi0: &SoftPolicy,
    cfg: &TrainingConfig,
) -> Result<TrainingOutput> {
    cfg.validate()?;
    if fmap.n_states != mdp.n_states() || fmap.n_actions != mdp.n_actions() {
        return Err(AihfError::DimensionMismatch { expected: mdp.n_states() * mdp.n_actions(), got: fmap.n_states * fmap.n_actions });
    }
    if cfg.w1 > 0.0 && demos.is_empty() {
        return Err(AihfError::EmptyDataset("demonstrations (required when w1 > 0)"));
    }
    if cfg.w1 == 0.0 && prefs.is_empty() {
        return Err(AihfError::EmptyDataset("preferences (required when w1 = 0)"));
    }
    for t in &demos.trajectories {
        t.validate_for(mdp)?;
    }
    let demo_occ = if demos.is_empty() {
        None
    } else {
        Some(DemoOccupancy::from_demonstrations(demos, mdp.n_states(), mdp.n_actions(), mdp.gamma())?)
    };
    let ctx = Context {
        mdp,
        fmap,
        pi0,
        demo_occ,
        demo_visits: demos.trajectories.iter().map(|t| Visitation::from_trajectory(t, mdp.n_actions(), mdp.gamma())).collect(),
        prefs: CompiledPreferences::new(prefs, fmap, mdp.gamma())?,
        // With w1 = 0 the demonstrations leave the objective, so they leave the centering set too.
        reached: if cfg.w1 == 0.0 { reached_entries(fmap, &DemonstrationSet::default(), prefs) } else { reached_entries(fmap, demos, prefs) },
        loss: cfg.loss_config(),
    };
    let center_on = cfg.center && fmap.is_one_hot();
    let alpha = cfg.step_size();
    let mut theta = RewardParams::zeros(fmap.dim);
    let mut policy = pi0.clone();
    let mut trace = TrainingTrace::default();
    let mut warm_inner: Option<SoftValues> = None;
    let mut warm_exact: Option<SoftValues> = None;
    let exact_tol = match cfg.inner_mode {
        InnerMode::FullSoftVi { tol } => tol,
        InnerMode::OnePolicyIterationStep => cfg.tol,
    };
    for k in 0..cfg.k {
        let table = reward_table(&theta, fmap)?;
        // (i) policy alignment
        policy = match cfg.inner_mode {
            InnerMode::OnePolicyIterationStep => soft_policy_iteration_step(mdp, &table, &policy, pi0, cfg.beta)?.0,
            InnerMode::FullSoftVi { tol } => solve_optimal(&ctx, &table, tol, &mut warm_inner)?,
        };
        // (ii) ascent direction
        let (g1, g2) = match cfg.gradient_mode {
            GradientMode::FullBatch => full_batch_direction(&ctx, &theta, &table, &policy)?,
            GradientMode::Stochastic => stochastic_direction(&ctx, cfg, &theta, &table, &policy, cfg.seed.split(k as u64))?,
        };
        let g = combine(cfg.w1, &g1, &g2);
        let mut rec = TraceRecord {
            k,
            alpha,
            theta_hash: theta_hash(&theta),
            grad_norm: norm(&g),
            exact_grad_norm_sq: None,
            policy_gap: None,
            l1: None,
            l2: if ctx.prefs.is_empty() { None } else { Some(ctx.prefs.loss(&table, &ctx.loss)?) },
            total: None,
        };
        if cfg.record_exact {
            let pi_theta = solve_optimal(&ctx, &table, exact_tol, &mut warm_exact)?;
            let (e1, e2) = full_batch_direction(&ctx, &theta, &table, &pi_theta)?;
            rec.exact_grad_norm_sq = Some(combine(cfg.w1, &e1, &e2).iter().map(|x| x * x).sum());
            rec.policy_gap = Some(log_gap(&policy, &pi_theta));
            let l1 = match &ctx.demo_occ {
                Some(occ) => Some(l1_loss_for_policy(occ, &pi_theta)?),
                None => None,
            };
            rec.l1 = l1;
            rec.total = Some(cfg.w1 * l1.unwrap_or(0.0) + rec.l2.unwrap_or(0.0));
        }
        trace.records.push(rec);
        // (iii) reward step
        let mut next: Vec<f64> = theta.theta.iter().zip(&g).map(|(t, d)| t + alpha * d).collect();
        if center_on {
            center(&mut next, &ctx.reached);
        }
        theta = RewardParams { theta: next };
        let n = theta.norm();
        if !(n <= DIVERGENCE_NORM) {
            return Err(AihfError::Diverged { iteration: k, norm: n });
        }
    }
    if cfg.k > 0 {
        let table = reward_table(&theta, fmap)?;
        let tol = match cfg.inner_mode {
            InnerMode::FullSoftVi { tol } => tol,
            InnerMode::OnePolicyIterationStep => cfg.tol,
        };
        policy = solve_optimal(&ctx, &table, tol, &mut warm_inner)?;
    }
    Ok(TrainingOutput { theta, policy, trace })
}

/// Joint training from demonstrations alone.
pub fn train_irl_only(
    mdp: &TabularMdp,
    fmap: &FeatureMap,
    demos: &DemonstrationSet,
    pi0: &SoftPolicy,
    cfg: &TrainingConfig,
) -> Result<TrainingOutput> {
    train_aihf(mdp, fmap, demos, &PreferenceSet::default(), pi0, cfg)
}

/// Discounted-count maximum likelihood policy
/// `pi(a|s) = sum_t gamma^t 1[s_t=s, a_t=a] / sum_t gamma^t 1[s_t=s]`;
/// states never visited keep the rows of `pi0`.
pub fn train_sft(mdp: &TabularMdp, demos: &DemonstrationSet, pi0: &SoftPolicy) -> Result<SoftPolicy> {
    pi0.check_rows(mdp.n_states(), mdp.n_actions())?;
    let occ = DemoOccupancy::from_demonstrations(demos, mdp.n_states(), mdp.n_actions(), mdp.gamma())?;
    let probs = (0..mdp.n_states())
        .map(|s| {
            let row: Vec<f64> = (0..mdp.n_actions()).map(|a| occ.get(s, a)).collect();
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter().map(|x| x / total).collect()
            } else {
                pi0.row(s).to_vec()
            }
        })
        .collect();
    Ok(SoftPolicy::from_rows_unchecked(probs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmReport {
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// Hash of every iterate `theta_k`, `k < iterations`.
    pub theta_hashes: Vec<u64>,
}

/// Fits the reward to preferences alone.
pub fn train_reward_model(
    fmap: &FeatureMap,
    prefs: &PreferenceSet,
    gamma: f64,
    cfg: &TrainingConfig,
) -> Result<(RewardParams, RmReport)> {
    if prefs.is_empty() {
        return Err(AihfError::EmptyDataset("preferences"));
    }
    let loss = LossConfig { w1: 0.0, ..cfg.loss_config() };
    loss.validate()?;
    let compiled = CompiledPreferences::new(prefs, fmap, gamma)?;
    let empty = DemonstrationSet::default();
    let reached = reached_entries(fmap, &empty, prefs);
    let center_on = cfg.center && fmap.is_one_hot();
    let eval = |theta: &RewardParams| -> Result<(f64, Vec<f64>)> {
        let table = reward_table(theta, fmap)?;
        let grads = reward_gradient_table(theta, fmap)?;
        let w = compiled.gradient_weights(&table, &loss, 0..compiled.len())?;
        Ok((compiled.loss(&table, &loss)?, feature_expectation(&grads, &w, fmap.dim)))
    };
    let mut theta = RewardParams::zeros(fmap.dim);
    let mut hashes = Vec::new();
    match cfg.rm_mode {
        RmMode::FixedStep => {
            let alpha = cfg.step_size();
            let mut last = 0.0;
            for k in 0..cfg.k {
                hashes.push(theta_hash(&theta));
                let table = reward_table(&theta, fmap)?;
                let grads = reward_gradient_table(&theta, fmap)?;
                let w = compiled.gradient_weights(&table, &loss, 0..compiled.len())?;
                let g = feature_expectation(&grads, &w, fmap.dim);
                last = norm(&g);
                let mut next: Vec<f64> = theta.theta.iter().zip(&g).map(|(t, d)| t + alpha * d).collect();
                if center_on {
                    center(&mut next, &reached);
                }
                theta = RewardParams { theta: next };
                if !(theta.norm() <= DIVERGENCE_NORM) {
                    return Err(AihfError::Diverged { iteration: k, norm: theta.norm() });
                }
            }
            let converged = last < 1e-8;
            Ok((theta, RmReport { iterations: cfg.k, grad_norm: last, converged, theta_hashes: hashes }))
        }
        RmMode::LineSearch { grad_tol, max_iter } => {
            // Barzilai-Borwein step proposals with an Armijo backtracking guard.
            let (mut f, mut g) = eval(&theta)?;
            let mut step = 1.0;
            for it in 0..max_iter {
                hashes.push(theta_hash(&theta));
                let gn = norm(&g);
                if gn < grad_tol {
                    return Ok((theta, RmReport { iterations: it, grad_norm: gn, converged: true, theta_hashes: hashes }));
                }
                let mut t = step;
                let (cand, fc, gc) = loop {
                    let mut c: Vec<f64> = theta.theta.iter().zip(&g).map(|(x, d)| x + t * d).collect();
                    if center_on {
                        center(&mut c, &reached);
                    }
                    let c = RewardParams { theta: c };
                    let (fc, gc) = eval(&c)?;
                    if fc >= f + 1e-4 * t * gn * gn {
                        break (c, fc, gc);
                    }
                    t *= 0.5;
                    if t < 1e-16 {
                        return Ok((theta, RmReport { iterations: it, grad_norm: gn, converged: false, theta_hashes: hashes }));
                    }
                };
                let s: Vec<f64> = cand.theta.iter().zip(&theta.theta).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = gc.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
                let ss: f64 = s.iter().map(|a| a * a).sum();
                step = if sy < 0.0 { (ss / -sy).clamp(1e-8, 1e8) } else { (2.0 * t).min(1e8) };
                theta = cand;
                f = fc;
                g = gc;
            }
            let gn = norm(&g);
            Ok((theta, RmReport { iterations: max_iter, grad_norm: gn, converged: gn < grad_tol, theta_hashes: hashes }))
        }
    }
}

/// Soft-optimal policy for `theta` against `reference`.
pub fn rl_stage(
    mdp: &TabularMdp,
    fmap: &FeatureMap,
    theta: &RewardParams,
    reference: &SoftPolicy,
    beta: f64,
    tol: f64,
) -> Result<SoftPolicy> {
    let table = reward_table(theta, fmap)?;
    let init = SoftValues::zeros(mdp.n_states(), mdp.n_actions(), beta);
    let sol = soft_value_iteration_from(mdp, &table, reference, beta, tol, DEFAULT_MAX_ITER, &init)?;
    if !sol.converged {
        return Err(AihfError::NoConvergence { iterations: sol.iterations, residual: sol.residual });
    }
    Ok(optimal_soft_policy(&sol.values, reference, beta))
}

#[derive(Debug, Clone)]
pub struct RlhfOutput {
    pub theta: RewardParams,
    pub policy: SoftPolicy,
    pub sft: SoftPolicy,
    pub rm: RmReport,
}

/// SFT, then reward modeling on preferences, then KL-regularized RL against
/// the SFT policy.
pub fn train_rlhf(
    mdp: &TabularMdp,
    fmap: &FeatureMap,
    demos: &DemonstrationSet,
    prefs: &PreferenceSet,
    pi0: &SoftPolicy,
    cfg: &TrainingConfig,
) -> Result<RlhfOutput> {
    cfg.validate()?;
    let sft = train_sft(mdp, demos, pi0)?;
    let (theta, rm) = train_reward_model(fmap, prefs, mdp.gamma(), cfg)?;
    let policy = rl_stage(mdp, fmap, &theta, &sft, cfg.beta, cfg.tol)?;
    Ok(RlhfOutput { theta, policy, sft, rm })
}

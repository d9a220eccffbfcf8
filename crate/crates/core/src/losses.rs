//! Objectives and gradients: the demonstration likelihood `L1`, the
//! Bradley-Terry-Luce preference likelihood `L2`, their weighted sum, and
//! the sampled ascent direction used by the alternating trainer.

use serde::{Deserialize, Serialize};

use crate::error::{AihfError, Result};
use crate::mdp::{DemoOccupancy, PreferenceSet, TabularMdp, Trajectory};
use crate::reward::{
    feature_expectation, reward_gradient_table, reward_table, trajectory_reward, trajectory_reward_gradient, FeatureMap,
    RewardParams,
};
use crate::soft_rl::{optimal_soft_policy, soft_value_iteration, SoftPolicy, SoftSolution, DEFAULT_MAX_ITER};

/// Where the temperature enters a loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureScale {
    /// No temperature factor.
    Unit,
    /// Multiply by `1/beta`.
    #[default]
    InverseBeta,
}

impl TemperatureScale {
    pub fn factor(self, beta: f64) -> f64 {
        match self {
            TemperatureScale::Unit => 1.0,
            TemperatureScale::InverseBeta => 1.0 / beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight on the demonstration term.
    pub w1: f64,
    pub beta: f64,
    /// Scale applied to reward gaps inside the preference sigmoid.
    #[serde(default)]
    pub btl_scale: TemperatureScale,
    /// Scale applied to the demonstration gradient.
    #[serde(default)]
    pub l1_scale: TemperatureScale,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { w1: 1.0, beta: 1.0, btl_scale: TemperatureScale::InverseBeta, l1_scale: TemperatureScale::InverseBeta }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.w1.is_finite() || self.w1 < 0.0 {
            return Err(AihfError::Config(format!("w1 = {} must be finite and >= 0", self.w1)));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(AihfError::Config(format!("beta = {} must be positive", self.beta)));
        }
        Ok(())
    }

    fn gap_scale(&self) -> f64 {
        self.btl_scale.factor(self.beta)
    }
}

/// `g = w1 * g1_part + g2_part`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub g: Vec<f64>,
    pub g1_part: Vec<f64>,
    pub g2_part: Vec<f64>,
}

impl GradientEstimate {
    fn combine(w1: f64, g1_part: Vec<f64>, g2_part: Vec<f64>) -> Self {
        let g = g1_part.iter().zip(&g2_part).map(|(a, b)| w1 * a + b).collect();
        GradientEstimate { g, g1_part, g2_part }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log sigma(x)` without cancellation for large `|x|`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `P(w > l) = sigma(scale * (r_w - r_l))`.
pub fn btl_probability(r_w: f64, r_l: f64, cfg: &LossConfig) -> f64 {
    sigmoid(cfg.gap_scale() * (r_w - r_l))
}

/// Sparse discounted visitation of one trajectory: `(s * n_actions + a, sum_t gamma^t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Visitation {
    pub entries: Vec<(usize, f64)>,
}

impl Visitation {
    pub fn from_trajectory(trajectory: &Trajectory, n_actions: usize, gamma: f64) -> Self {
        let mut entries: Vec<(usize, f64)> = Vec::new();
        let mut w = 1.0;
        for &(s, a) in &trajectory.steps {
            let idx = s * n_actions + a;
            match entries.iter_mut().find(|(i, _)| *i == idx) {
                Some(e) => e.1 += w,
                None => entries.push((idx, w)),
            }
            w *= gamma;
        }
        Visitation { entries }
    }

    /// Discounted return under a reward table.
    pub fn value(&self, table: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, w)| w * table[i]).sum()
    }

    pub fn add_scaled(&self, acc: &mut [f64], c: f64) {
        for &(i, w) in &self.entries {
            acc[i] += c * w;
        }
    }
}

/// Preference pairs reduced to visitation vectors.
#[derive(Debug, Clone)]
pub struct CompiledPreferences {
    pub pairs: Vec<(Visitation, Visitation)>,
    n_entries: usize,
}

impl CompiledPreferences {
    pub fn new(prefs: &PreferenceSet, fmap: &FeatureMap, gamma: f64) -> Result<Self> {
        let n_entries = fmap.n_states * fmap.n_actions;
        let mut pairs = Vec::with_capacity(prefs.len());
        for p in &prefs.pairs {
            for t in [&p.winner, &p.loser] {
                if let Some(&(s, a)) = t.steps.iter().find(|&&(s, a)| s >= fmap.n_states || a >= fmap.n_actions) {
                    return Err(AihfError::IndexOutOfRange(format!("preference step (s={s}, a={a})")));
                }
            }
            pairs.push((
                Visitation::from_trajectory(&p.winner, fmap.n_actions, gamma),
                Visitation::from_trajectory(&p.loser, fmap.n_actions, gamma),
            ));
        }
        Ok(CompiledPreferences { pairs, n_entries })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Mean log-likelihood over all pairs.
    pub fn loss(&self, table: &[f64], cfg: &LossConfig) -> Result<f64> {
        self.loss_subset(table, cfg, 0..self.pairs.len())
    }

    pub fn loss_subset(&self, table: &[f64], cfg: &LossConfig, idx: impl IntoIterator<Item = usize>) -> Result<f64> {
        let k = cfg.gap_scale();
        let mut n = 0usize;
        let mut total = 0.0;
        for i in idx {
            let (w, l) = &self.pairs[i];
            total += log_sigmoid(k * (w.value(table) - l.value(table)));
            n += 1;
        }
        if n == 0 {
            return Err(AihfError::EmptyDataset("preferences"));
        }
        Ok(total / n as f64)
    }

    /// Gradient of the mean log-likelihood in visitation space: entry `(s,a)`
    /// multiplies `grad r(s,a)`.
    pub fn gradient_weights(&self, table: &[f64], cfg: &LossConfig, idx: impl IntoIterator<Item = usize>) -> Result<Vec<f64>> {
        let k = cfg.gap_scale();
        let mut acc = vec![0.0; self.n_entries];
        let mut n = 0usize;
        for i in idx {
            let (w, l) = &self.pairs[i];
            let c = (1.0 - sigmoid(k * (w.value(table) - l.value(table)))) * k;
            w.add_scaled(&mut acc, c);
            l.add_scaled(&mut acc, -c);
            n += 1;
        }
        if n == 0 {
            return Err(AihfError::EmptyDataset("preferences"));
        }
        let inv = 1.0 / n as f64;
        acc.iter_mut().for_each(|v| *v *= inv);
        Ok(acc)
    }

    pub fn gradient(&self, theta: &RewardParams, fmap: &FeatureMap, cfg: &LossConfig) -> Result<Vec<f64>> {
        let table = reward_table(theta, fmap)?;
        let grads = reward_gradient_table(theta, fmap)?;
        let w = self.gradient_weights(&table, cfg, 0..self.pairs.len())?;
        Ok(feature_expectation(&grads, &w, fmap.dim))
    }
}

/// Mean over pairs of `log sigma(scale * (R(tau_w) - R(tau_l)))`.
pub fn l2_loss(theta: &RewardParams, fmap: &FeatureMap, prefs: &PreferenceSet, gamma: f64, cfg: &LossConfig) -> Result<f64> {
    let compiled = CompiledPreferences::new(prefs, fmap, gamma)?;
    compiled.loss(&reward_table(theta, fmap)?, cfg)
}

/// Gradient of [`l2_loss`]:
/// mean over pairs of `(1 - sigma(scale*gap)) * scale * (grad R(tau_w) - grad R(tau_l))`.
pub fn l2_gradient(
    theta: &RewardParams,
    fmap: &FeatureMap,
    prefs: &PreferenceSet,
    gamma: f64,
    cfg: &LossConfig,
) -> Result<Vec<f64>> {
    CompiledPreferences::new(prefs, fmap, gamma)?.gradient(theta, fmap, cfg)
}

fn solve_policy(
    mdp: &TabularMdp,
    table: &[f64],
    pi0: &SoftPolicy,
    beta: f64,
    tol: f64,
) -> Result<(SoftPolicy, SoftSolution)> {
    let sol = soft_value_iteration(mdp, table, pi0, beta, tol, DEFAULT_MAX_ITER)?;
    if !sol.converged {
        return Err(AihfError::NoConvergence { iterations: sol.iterations, residual: sol.residual });
    }
    Ok((optimal_soft_policy(&sol.values, pi0, beta), sol))
}

fn check_demos(mdp: &TabularMdp, demos: &DemoOccupancy) -> Result<()> {
    if demos.n_states != mdp.n_states() || demos.n_actions != mdp.n_actions() {
        return Err(AihfError::DimensionMismatch {
            expected: mdp.n_states() * mdp.n_actions(),
            got: demos.n_states * demos.n_actions,
        });
    }
    Ok(())
}

/// Demonstration log-likelihood `E_D[sum_t gamma^t log pi_theta(a_t|s_t)]`,
/// with `pi_theta` the soft-optimal policy of `r_theta`.
pub fn l1_loss(
    mdp: &TabularMdp,
    theta: &RewardParams,
    fmap: &FeatureMap,
    demos: &DemoOccupancy,
    pi0: &SoftPolicy,
    beta: f64,
    tol: f64,
) -> Result<f64> {
    check_demos(mdp, demos)?;
    let table = reward_table(theta, fmap)?;
    let (pi, _) = solve_policy(mdp, &table, pi0, beta, tol)?;
    l1_loss_for_policy(demos, &pi)
}

/// `sum_{s,a} d_D(s,a) log pi(a|s)`.
pub fn l1_loss_for_policy(demos: &DemoOccupancy, pi: &SoftPolicy) -> Result<f64> {
    let mut total = 0.0;
    for s in 0..demos.n_states {
        for a in 0..demos.n_actions {
            let d = demos.get(s, a);
            if d == 0.0 {
                continue;
            }
            let p = pi.prob(s, a);
            if p == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            total += d * p.ln();
        }
    }
    Ok(total)
}

/// [`l1_loss`] through the value form
/// `(1/beta) E_D[sum_t gamma^t (beta log pi0 + Q - V)]`.
pub fn l1_loss_via_values(
    mdp: &TabularMdp,
    theta: &RewardParams,
    fmap: &FeatureMap,
    demos: &DemoOccupancy,
    pi0: &SoftPolicy,
    beta: f64,
    tol: f64,
) -> Result<f64> {
    check_demos(mdp, demos)?;
    let table = reward_table(theta, fmap)?;
    let (_, sol) = solve_policy(mdp, &table, pi0, beta, tol)?;
    let vals = &sol.values;
    let mut total = 0.0;
    for s in 0..demos.n_states {
        for a in 0..demos.n_actions {
            let d = demos.get(s, a);
            if d == 0.0 {
                continue;
            }
            let p0 = pi0.prob(s, a);
            if p0 == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            total += d * (beta * p0.ln() + vals.q[s][a] - vals.v[s]);
        }
    }
    Ok(total / beta)
}

/// Expert-minus-agent feature expectation
/// `scale * (E_D[sum_t gamma^t grad r] - E_{s0~rho, pi}[sum_t gamma^t grad r])`
/// with the agent term computed exactly from the discounted occupancy of
/// `policy`.
pub fn l1_direction_for_policy(
    mdp: &TabularMdp,
    theta: &RewardParams,
    fmap: &FeatureMap,
    demos: &DemoOccupancy,
    policy: &SoftPolicy,
    cfg: &LossConfig,
) -> Result<Vec<f64>> {
    check_demos(mdp, demos)?;
    let grads = reward_gradient_table(theta, fmap)?;
    let agent = mdp.occupancy(policy);
    let diff: Vec<f64> = demos.values.iter().zip(&agent).map(|(d, p)| d - p).collect();
    let k = cfg.l1_scale.factor(cfg.beta);
    Ok(feature_expectation(&grads, &diff, fmap.dim).into_iter().map(|v| k * v).collect())
}

/// Gradient of the demonstration likelihood in the feature-matching form:
/// `scale * (mu_D - mu_{pi_theta})`. With the inverse-temperature scale and a
/// demonstration occupancy that satisfies the MDP flow equations from `rho`
/// (for instance the exact occupancy of an expert), this is the exact
/// derivative of [`l1_loss`].
pub fn l1_gradient_exact(
    mdp: &TabularMdp,
    theta: &RewardParams,
    fmap: &FeatureMap,
    demos: &DemoOccupancy,
    pi0: &SoftPolicy,
    cfg: &LossConfig,
    tol: f64,
) -> Result<Vec<f64>> {
    let table = reward_table(theta, fmap)?;
    let (pi, _) = solve_policy(mdp, &table, pi0, cfg.beta, tol)?;
    l1_direction_for_policy(mdp, theta, fmap, demos, &pi, cfg)
}

/// Exact derivative of [`l1_loss`] for an arbitrary demonstration
/// occupancy, by the chain rule through `log pi = log pi0 + (Q - V)/beta`:
/// `(1/beta) sum_{s,a} d_D(s,a) (grad Q(s,a) - grad V(s))` with
/// `grad V(s) = E_pi[sum_t gamma^t grad r | s0 = s]` and
/// `grad Q(s,a) = grad r(s,a) + gamma E_{s'} grad V(s')`.
pub fn l1_gradient_chain_rule(
    mdp: &TabularMdp,
    theta: &RewardParams,
    fmap: &FeatureMap,
    demos: &DemoOccupancy,
    pi0: &SoftPolicy,
    beta: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    check_demos(mdp, demos)?;
    let table = reward_table(theta, fmap)?;
    let grads = reward_gradient_table(theta, fmap)?;
    let (pi, _) = solve_policy(mdp, &table, pi0, beta, tol)?;
    let ns = mdp.n_states();
    let na = mdp.n_actions();
    let dim = fmap.dim;
    // grad V = (I - gamma P_pi)^{-1} Phi_pi, one column per feature.
    let kernel = mdp.policy_kernel(&pi);
    let mut grad_v = vec![vec![0.0; dim]; ns];
    for j in 0..dim {
        let b: Vec<f64> = (0..ns).map(|s| (0..na).map(|a| pi.prob(s, a) * grads[s * na + a][j]).sum()).collect();
        let col = crate::linalg::solve_discounted(&kernel, mdp.gamma(), &b);
        for s in 0..ns {
            grad_v[s][j] = col[s];
        }
    }
    let mut out = vec![0.0; dim];
    for s in 0..ns {
        for a in 0..na {
            let d = demos.get(s, a);
            if d == 0.0 {
                continue;
            }
            let next = mdp.next_dist(s, a);
            for j in 0..dim {
                let cont: f64 = next.iter().zip(&grad_v).map(|(p, g)| p * g[j]).sum();
                out[j] += d * (grads[s * na + a][j] + mdp.gamma() * cont - grad_v[s][j]);
            }
        }
    }
    out.iter_mut().for_each(|v| *v /= beta);
    Ok(out)
}

/// The sampled ascent direction for one expert trajectory, one agent
/// trajectory and one preference pair:
/// `g1 = scale_1 * (grad R(tau_E) - grad R(tau_A))`,
/// `g2 = (1 - sigma(k * (R(tau_W) - R(tau_L)))) * k * (grad R(tau_W) - grad R(tau_L))`.
/// Passing `None` for a component sets it to zero.
pub fn stochastic_gradient_gk(
    theta: &RewardParams,
    fmap: &FeatureMap,
    demo_sample: Option<(&Trajectory, &Trajectory)>,
    pref_sample: Option<(&Trajectory, &Trajectory)>,
    gamma: f64,
    cfg: &LossConfig,
) -> Result<GradientEstimate> {
    let demo: Vec<(&Trajectory, &Trajectory)> = demo_sample.into_iter().collect();
    let prefs: Vec<(&Trajectory, &Trajectory)> = pref_sample.into_iter().collect();
    stochastic_gradient_batch(theta, fmap, &demo, &prefs, gamma, cfg)
}

/// Mini-batch version of [`stochastic_gradient_gk`]: each part is averaged
/// over its (expert, agent) or (winner, loser) pairs. Empty batches give a
/// zero part.
pub fn stochastic_gradient_batch(
    theta: &RewardParams,
    fmap: &FeatureMap,
    demo_agent: &[(&Trajectory, &Trajectory)],
    prefs: &[(&Trajectory, &Trajectory)],
    gamma: f64,
    cfg: &LossConfig,
) -> Result<GradientEstimate> {
    let dim = fmap.dim;
    let mut g1 = vec![0.0; dim];
    if !demo_agent.is_empty() {
        let k = cfg.l1_scale.factor(cfg.beta) / demo_agent.len() as f64;
        for (e, a) in demo_agent {
            let ge = trajectory_reward_gradient(theta, fmap, e, gamma)?;
            let ga = trajectory_reward_gradient(theta, fmap, a, gamma)?;
            for ((o, x), y) in g1.iter_mut().zip(&ge).zip(&ga) {
                *o += k * (x - y);
            }
        }
    }
    let mut g2 = vec![0.0; dim];
    if !prefs.is_empty() {
        let scale = cfg.gap_scale();
        let inv = 1.0 / prefs.len() as f64;
        for (w, l) in prefs {
            let gap = trajectory_reward(theta, fmap, w, gamma)? - trajectory_reward(theta, fmap, l, gamma)?;
            let c = (1.0 - sigmoid(scale * gap)) * scale * inv;
            let gw = trajectory_reward_gradient(theta, fmap, w, gamma)?;
            let gl = trajectory_reward_gradient(theta, fmap, l, gamma)?;
            for ((o, x), y) in g2.iter_mut().zip(&gw).zip(&gl) {
                *o += c * (x - y);
            }
        }
    }
    Ok(GradientEstimate::combine(cfg.w1, g1, g2))
}

/// `w1 * L1 + L2`. An empty preference set contributes zero; the
/// demonstration term is skipped when `w1 = 0`.
#[allow(clippy::too_many_arguments)]
pub fn total_loss(
    mdp: &TabularMdp,
    theta: &RewardParams,
    fmap: &FeatureMap,
    demos: Option<&DemoOccupancy>,
    prefs: &PreferenceSet,
    pi0: &SoftPolicy,
    cfg: &LossConfig,
    tol: f64,
) -> Result<f64> {
    cfg.validate()?;
    let l1 = if cfg.w1 > 0.0 {
        let demos = demos.ok_or(AihfError::EmptyDataset("demonstrations"))?;
        cfg.w1 * l1_loss(mdp, theta, fmap, demos, pi0, cfg.beta, tol)?
    } else {
        0.0
    };
    let l2 = if prefs.is_empty() { 0.0 } else { l2_loss(theta, fmap, prefs, mdp.gamma(), cfg)? };
    Ok(l1 + l2)
}

/// `w1 * grad L1 + grad L2`, with `grad L1` in the feature-matching form.
#[allow(clippy::too_many_arguments)]
pub fn total_gradient(
    mdp: &TabularMdp,
    theta: &RewardParams,
    fmap: &FeatureMap,
    demos: Option<&DemoOccupancy>,
    prefs: &PreferenceSet,
    pi0: &SoftPolicy,
    cfg: &LossConfig,
    tol: f64,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut g = vec![0.0; fmap.dim];
    if cfg.w1 > 0.0 {
        let demos = demos.ok_or(AihfError::EmptyDataset("demonstrations"))?;
        let g1 = l1_gradient_exact(mdp, theta, fmap, demos, pi0, cfg, tol)?;
        g.iter_mut().zip(&g1).for_each(|(o, x)| *o += cfg.w1 * x);
    }
    if !prefs.is_empty() {
        let g2 = l2_gradient(theta, fmap, prefs, mdp.gamma(), cfg)?;
        g.iter_mut().zip(&g2).for_each(|(o, x)| *o += x);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::PreferencePair;

    #[test]
    fn btl_symmetry_and_saturation() {
        let cfg = LossConfig::default();
        assert_eq!(btl_probability(1.3, 1.3, &cfg), 0.5);
        let unit = LossConfig { btl_scale: TemperatureScale::Unit, ..cfg };
        assert!(btl_probability(50.0, 0.0, &unit) >= 1.0 - 1e-20);
        assert!(btl_probability(0.0, 50.0, &unit) < 1e-20);
        for beta in [0.1, 1.0, 7.0] {
            let c = LossConfig { beta, ..cfg };
            assert_eq!(btl_probability(-2.0, -2.0, &c), 0.5);
        }
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) - 0.5f64.ln()).abs() < 1e-16);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-12);
        assert!(log_sigmoid(800.0) <= 0.0);
    }

    fn tiny_prefs() -> PreferenceSet {
        PreferenceSet::new(vec![
            PreferencePair {
                winner: Trajectory::new(vec![(0, 1), (1, 0)]).unwrap(),
                loser: Trajectory::new(vec![(0, 0), (1, 1)]).unwrap(),
            },
            PreferencePair {
                winner: Trajectory::new(vec![(1, 1)]).unwrap(),
                loser: Trajectory::new(vec![(1, 0)]).unwrap(),
            },
        ])
    }

    #[test]
    fn zero_theta_loss_is_log_half() {
        let f = FeatureMap::one_hot(2, 2);
        let l = l2_loss(&RewardParams::zeros(4), &f, &tiny_prefs(), 0.9, &LossConfig::default()).unwrap();
        assert!((l - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn identical_pairs_have_zero_gradient() {
        let f = FeatureMap::one_hot(2, 2);
        let t = Trajectory::new(vec![(0, 1), (1, 1)]).unwrap();
        let prefs = PreferenceSet::new(vec![PreferencePair { winner: t.clone(), loser: t }]);
        let theta = RewardParams::new(vec![0.3, -1.0, 2.0, 0.1]).unwrap();
        let g = l2_gradient(&theta, &f, &prefs, 0.9, &LossConfig::default()).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn empty_prefs_is_an_error() {
        let f = FeatureMap::one_hot(2, 2);
        assert!(matches!(
            l2_loss(&RewardParams::zeros(4), &f, &PreferenceSet::default(), 0.9, &LossConfig::default()),
            Err(AihfError::EmptyDataset(_))
        ));
    }

    #[test]
    fn single_pair_loss_is_log_sigmoid_of_gap() {
        let f = FeatureMap::one_hot(1, 2);
        let prefs = PreferenceSet::new(vec![PreferencePair {
            winner: Trajectory::new(vec![(0, 0)]).unwrap(),
            loser: Trajectory::new(vec![(0, 1)]).unwrap(),
        }]);
        let theta = RewardParams::new(vec![0.4, 1.1]).unwrap();
        let cfg = LossConfig { btl_scale: TemperatureScale::Unit, ..LossConfig::default() };
        let l = l2_loss(&theta, &f, &prefs, 0.9, &cfg).unwrap();
        assert!((l - log_sigmoid(0.4 - 1.1)).abs() < 1e-15);
    }

    #[test]
    fn matched_samples_give_zero_estimate() {
        let f = FeatureMap::one_hot(2, 2);
        let t = Trajectory::new(vec![(0, 1), (1, 0)]).unwrap();
        let u = Trajectory::new(vec![(1, 1)]).unwrap();
        let theta = RewardParams::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let est = stochastic_gradient_gk(&theta, &f, Some((&t, &t)), Some((&u, &u)), 0.9, &LossConfig::default()).unwrap();
        assert!(est.g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn estimate_decomposes_exactly() {
        let f = FeatureMap::one_hot(2, 2);
        let e = Trajectory::new(vec![(0, 1), (1, 0)]).unwrap();
        let a = Trajectory::new(vec![(0, 0), (0, 0)]).unwrap();
        let w = Trajectory::new(vec![(1, 1)]).unwrap();
        let l = Trajectory::new(vec![(1, 0)]).unwrap();
        let cfg = LossConfig { w1: 0.37, ..LossConfig::default() };
        let theta = RewardParams::new(vec![0.1, -0.2, 0.3, 0.0]).unwrap();
        let est = stochastic_gradient_gk(&theta, &f, Some((&e, &a)), Some((&w, &l)), 0.9, &cfg).unwrap();
        for i in 0..4 {
            assert_eq!(est.g[i], cfg.w1 * est.g1_part[i] + est.g2_part[i]);
        }
    }
}

//! KL-regularized tabular RL: the soft Bellman operator, soft value
//! iteration, the closed-form optimal policy, soft policy evaluation and the
//! regularized return.
//!
//! All routines use the temperature-scaled convention
//! `V(s) = beta * log sum_a pi0(a|s) exp(Q(s,a)/beta)` and
//! `pi(a|s) ∝ pi0(a|s) exp(Q(s,a)/beta)`. Reference policies may contain
//! zeros; those actions are excluded from every log-sum-exp and receive zero
//! probability.

use serde::{Deserialize, Serialize};

use crate::error::{AihfError, Result};
use crate::linalg;
use crate::mdp::TabularMdp;
use crate::reward::{reward_table, FeatureMap, RewardParams};

/// Row-sum tolerance for policies.
pub const POLICY_ROW_TOL: f64 = 1e-10;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// A stochastic policy table `pi(a|s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftPolicy {
    pub probs: Vec<Vec<f64>>,
}

impl SoftPolicy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        SoftPolicy { probs: vec![vec![1.0 / n_actions as f64; n_actions]; n_states] }
    }

    /// Validates rows (non-negative, summing to one within 1e-10).
    pub fn from_rows(probs: Vec<Vec<f64>>) -> Result<Self> {
        let p = SoftPolicy { probs };
        let n_actions = p.probs.first().map_or(0, |r| r.len());
        p.check_rows(p.probs.len(), n_actions)?;
        Ok(p)
    }

    pub fn from_rows_unchecked(probs: Vec<Vec<f64>>) -> Self {
        SoftPolicy { probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.first().map_or(0, |r| r.len())
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s][a]
    }

    pub fn check_rows(&self, n_states: usize, n_actions: usize) -> Result<()> {
        if self.probs.len() != n_states {
            return Err(AihfError::DimensionMismatch { expected: n_states, got: self.probs.len() });
        }
        for (s, row) in self.probs.iter().enumerate() {
            if row.len() != n_actions {
                return Err(AihfError::DimensionMismatch { expected: n_actions, got: row.len() });
            }
            if row.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                return Err(AihfError::InvalidPolicy(format!("row {s} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > POLICY_ROW_TOL {
                return Err(AihfError::InvalidPolicy(format!("row {s} sums to {sum}")));
            }
        }
        Ok(())
    }

    pub fn has_full_support(&self) -> bool {
        self.probs.iter().all(|row| row.iter().all(|&p| p > 0.0))
    }

    /// `max_{s,a} |log pi(a|s) - log other(a|s)|`; infinite if the supports
    /// differ.
    pub fn log_sup_distance(&self, other: &SoftPolicy) -> f64 {
        let mut m: f64 = 0.0;
        for (r1, r2) in self.probs.iter().zip(&other.probs) {
            for (&p, &q) in r1.iter().zip(r2) {
                if p == 0.0 && q == 0.0 {
                    continue;
                }
                m = m.max((p.ln() - q.ln()).abs());
            }
        }
        m
    }

    /// Largest per-state total-variation distance.
    pub fn max_tv(&self, other: &SoftPolicy) -> f64 {
        self.per_state_tv(other).into_iter().fold(0.0, f64::max)
    }

    pub fn per_state_tv(&self, other: &SoftPolicy) -> Vec<f64> {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(r1, r2)| 0.5 * r1.iter().zip(r2).map(|(p, q)| (p - q).abs()).sum::<f64>())
            .collect()
    }

    /// `KL(pi(.|s) || reference(.|s))` per state.
    pub fn kl_per_state(&self, reference: &SoftPolicy) -> Result<Vec<f64>> {
        self.probs
            .iter()
            .zip(&reference.probs)
            .enumerate()
            .map(|(s, (r1, r0))| {
                let mut kl = 0.0;
                for (a, (&p, &q)) in r1.iter().zip(r0).enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    if q == 0.0 {
                        return Err(AihfError::InfiniteKl { state: s, action: a });
                    }
                    kl += p * (p / q).ln();
                }
                Ok(kl)
            })
            .collect()
    }
}

/// Soft action values and state values under one reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftValues {
    pub q: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    pub beta: f64,
    /// Identifies the reward parameters the values were computed under.
    #[serde(default)]
    pub theta_tag: Option<String>,
}

impl SoftValues {
    /// Values with `V` recomputed from `Q` by the soft maximum.
    pub fn from_q(q: Vec<Vec<f64>>, pi0: &SoftPolicy, beta: f64) -> Self {
        let v = q.iter().enumerate().map(|(s, row)| soft_max(row, pi0.row(s), beta)).collect();
        SoftValues { q, v, beta, theta_tag: None }
    }

    pub fn zeros(n_states: usize, n_actions: usize, beta: f64) -> Self {
        SoftValues { q: vec![vec![0.0; n_actions]; n_states], v: vec![0.0; n_states], beta, theta_tag: None }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.theta_tag = Some(tag.into());
        self
    }
}

/// Result of an iterative soft solve.
#[derive(Debug, Clone)]
pub struct SoftSolution {
    pub values: SoftValues,
    /// `||T(Q) - Q||_inf` of the returned iterate.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `beta * log sum_a w_a exp(q_a / beta)`, max-stabilized; actions with zero
/// weight are skipped.
pub fn soft_max(q: &[f64], weights: &[f64], beta: f64) -> f64 {
    let m = q
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&x, _)| x / beta)
        .fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = q.iter().zip(weights).filter(|(_, &w)| w > 0.0).map(|(&x, &w)| w * (x / beta - m).exp()).sum();
    beta * (m + s.ln())
}

fn check_reference(mdp: &TabularMdp, pi0: &SoftPolicy) -> Result<()> {
    pi0.check_rows(mdp.n_states(), mdp.n_actions())?;
    if let Some(s) = pi0.probs.iter().position(|row| row.iter().all(|&p| p == 0.0)) {
        return Err(AihfError::InvalidPolicy(format!("reference row {s} has no support")));
    }
    Ok(())
}

fn check_reward_len(mdp: &TabularMdp, reward: &[f64]) -> Result<()> {
    let n = mdp.n_states() * mdp.n_actions();
    if reward.len() != n {
        return Err(AihfError::DimensionMismatch { expected: n, got: reward.len() });
    }
    Ok(())
}

fn bellman_q(mdp: &TabularMdp, reward: &[f64], next_v: &[f64]) -> Vec<Vec<f64>> {
    let na = mdp.n_actions();
    let gamma = mdp.gamma();
    (0..mdp.n_states())
        .map(|s| {
            (0..na)
                .map(|a| {
                    let cont: f64 = mdp.next_dist(s, a).iter().zip(next_v).map(|(p, v)| if *p == 0.0 { 0.0 } else { p * v }).sum();
                    reward[s * na + a] + gamma * cont
                })
                .collect()
        })
        .collect()
}

fn sup_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(r1, r2)| r1.iter().zip(r2).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

/// One application of the soft Bellman optimality operator:
/// `T(Q)(s,a) = r(s,a) + gamma E_{s'} [beta log sum_a' pi0(a'|s') exp(Q(s',a')/beta)]`.
pub fn soft_bellman_apply(
    mdp: &TabularMdp,
    reward: &[f64],
    pi0: &SoftPolicy,
    beta: f64,
    q: &SoftValues,
) -> Result<SoftValues> {
    check_reference(mdp, pi0)?;
    check_reward_len(mdp, reward)?;
    let v: Vec<f64> = q.q.iter().enumerate().map(|(s, row)| soft_max(row, pi0.row(s), beta)).collect();
    Ok(SoftValues::from_q(bellman_q(mdp, reward, &v), pi0, beta))
}

/// Iterates the soft Bellman operator from `Q = 0` until
/// `||T(Q) - Q||_inf <= tol`.
pub fn soft_value_iteration(
    mdp: &TabularMdp,
    reward: &[f64],
    pi0: &SoftPolicy,
    beta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SoftSolution> {
    let init = SoftValues::zeros(mdp.n_states(), mdp.n_actions(), beta);
    soft_value_iteration_from(mdp, reward, pi0, beta, tol, max_iter, &init)
}

/// Soft value iteration from a given starting point.
pub fn soft_value_iteration_from(
    mdp: &TabularMdp,
    reward: &[f64],
    pi0: &SoftPolicy,
    beta: f64,
    tol: f64,
    max_iter: usize,
    init: &SoftValues,
) -> Result<SoftSolution> {
    if !(tol > 0.0) {
        return Err(AihfError::Config("tol must be positive".into()));
    }
    if !(beta > 0.0) {
        return Err(AihfError::Config("beta must be positive".into()));
    }
    check_reference(mdp, pi0)?;
    check_reward_len(mdp, reward)?;
    let mut q = init.q.clone();
    let mut best = (f64::INFINITY, q.clone());
    for it in 0..max_iter.max(1) {
        let v: Vec<f64> = q.iter().enumerate().map(|(s, row)| soft_max(row, pi0.row(s), beta)).collect();
        let next = bellman_q(mdp, reward, &v);
        let res = sup_diff(&next, &q);
        if res < best.0 {
            best = (res, q.clone());
        }
        if res <= tol {
            return Ok(SoftSolution {
                values: SoftValues { q, v, beta, theta_tag: None },
                residual: res,
                iterations: it,
                converged: true,
            });
        }
        q = next;
    }
    let (residual, q) = best;
    Ok(SoftSolution { values: SoftValues::from_q(q, pi0, beta), residual, iterations: max_iter, converged: false })
}

/// `pi(a|s) = pi0(a|s) exp(Q(s,a)/beta) / sum_b pi0(b|s) exp(Q(s,b)/beta)`.
pub fn optimal_soft_policy(values: &SoftValues, pi0: &SoftPolicy, beta: f64) -> SoftPolicy {
    let probs = values
        .q
        .iter()
        .enumerate()
        .map(|(s, row)| {
            let w = pi0.row(s);
            let m = row
                .iter()
                .zip(w)
                .filter(|(_, &p)| p > 0.0)
                .map(|(&x, _)| x / beta)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut out: Vec<f64> =
                row.iter().zip(w).map(|(&x, &p)| if p > 0.0 { p * (x / beta - m).exp() } else { 0.0 }).collect();
            let z: f64 = out.iter().sum();
            out.iter_mut().for_each(|p| *p /= z);
            out
        })
        .collect();
    SoftPolicy { probs }
}

/// Soft Q-function of a fixed policy:
/// `Q(s,a) = r(s,a) + gamma E_{s'} E_{a'~pi}[Q(s',a') - beta log(pi(a'|s')/pi0(a'|s'))]`.
///
/// Solved exactly by an `n_states` linear system when the table has at most
/// 10^4 entries, otherwise by iteration to `tol`.
pub fn soft_policy_evaluation(
    mdp: &TabularMdp,
    reward: &[f64],
    policy: &SoftPolicy,
    pi0: &SoftPolicy,
    beta: f64,
    tol: f64,
) -> Result<SoftValues> {
    check_reference(mdp, pi0)?;
    check_reward_len(mdp, reward)?;
    policy.check_rows(mdp.n_states(), mdp.n_actions())?;
    let kl = policy.kl_per_state(pi0)?;
    let na = mdp.n_actions();
    // V(s) = sum_a pi(a|s) r(s,a) - beta KL(s) + gamma sum_s' P_pi(s,s') V(s')
    let b: Vec<f64> = (0..mdp.n_states())
        .map(|s| (0..na).map(|a| policy.prob(s, a) * reward[s * na + a]).sum::<f64>() - beta * kl[s])
        .collect();
    let kernel = mdp.policy_kernel(policy);
    let v = if mdp.n_states() * na <= linalg::DIRECT_SOLVE_LIMIT {
        linalg::solve_discounted(&kernel, mdp.gamma(), &b)
    } else {
        let mut v = b.clone();
        loop {
            let next: Vec<f64> = (0..v.len())
                .map(|s| b[s] + mdp.gamma() * kernel[s].iter().zip(&v).map(|(k, x)| k * x).sum::<f64>())
                .collect();
            let diff = next.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            v = next;
            if diff <= tol * (1.0 - mdp.gamma()) {
                break;
            }
        }
        v
    };
    let q = bellman_q(mdp, reward, &v);
    Ok(SoftValues { q, v, beta, theta_tag: None })
}

/// One soft policy-iteration step: evaluates `policy` and returns
/// `pi'(a|s) ∝ pi0(a|s) exp(Q^soft_pi(s,a)/beta)` with the evaluated values.
pub fn soft_policy_iteration_step(
    mdp: &TabularMdp,
    reward: &[f64],
    policy: &SoftPolicy,
    pi0: &SoftPolicy,
    beta: f64,
) -> Result<(SoftPolicy, SoftValues)> {
    let values = soft_policy_evaluation(mdp, reward, policy, pi0, beta, DEFAULT_TOL)?;
    Ok((optimal_soft_policy(&values, pi0, beta), values))
}

/// KL-regularized return
/// `E_{s0~rho, tau~pi}[R(tau; theta) - beta sum_t gamma^t KL(pi(.|s_t) || pi0(.|s_t))]`.
pub fn l3_objective(
    mdp: &TabularMdp,
    theta: &RewardParams,
    fmap: &FeatureMap,
    policy: &SoftPolicy,
    pi0: &SoftPolicy,
    beta: f64,
    tol: f64,
) -> Result<f64> {
    let r = reward_table(theta, fmap)?;
    l3_objective_table(mdp, &r, policy, pi0, beta, tol)
}

/// [`l3_objective`] on a materialized reward table.
pub fn l3_objective_table(
    mdp: &TabularMdp,
    reward: &[f64],
    policy: &SoftPolicy,
    pi0: &SoftPolicy,
    beta: f64,
    tol: f64,
) -> Result<f64> {
    let values = soft_policy_evaluation(mdp, reward, policy, pi0, beta, tol)?;
    Ok(mdp.initial_dist().iter().zip(&values.v).map(|(p, v)| p * v).sum())
}

/// Soft-optimal policy and values for a reward table.
pub fn solve_soft_optimal(
    mdp: &TabularMdp,
    reward: &[f64],
    pi0: &SoftPolicy,
    beta: f64,
    tol: f64,
) -> Result<(SoftPolicy, SoftSolution)> {
    let sol = soft_value_iteration(mdp, reward, pi0, beta, tol, DEFAULT_MAX_ITER)?;
    Ok((optimal_soft_policy(&sol.values, pi0, beta), sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Horizon;

    fn chain() -> TabularMdp {
        TabularMdp::new(
            vec![
                vec![vec![0.9, 0.1, 0.0], vec![0.1, 0.9, 0.0]],
                vec![vec![0.9, 0.1, 0.0], vec![0.0, 0.1, 0.9]],
                vec![vec![0.0, 0.9, 0.1], vec![0.0, 0.0, 1.0]],
            ],
            vec![1.0, 0.0, 0.0],
            0.9,
            Horizon::Infinite,
        )
        .unwrap()
    }

    #[test]
    fn zero_discount_returns_reward() {
        let m = chain().with_gamma(0.0);
        let r = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let pi0 = SoftPolicy::uniform(3, 2);
        let q = SoftValues { q: vec![vec![7.0, -3.0]; 3], v: vec![0.0; 3], beta: 1.0, theta_tag: None };
        let t = soft_bellman_apply(&m, &r, &pi0, 1.0, &q).unwrap();
        assert_eq!(t.q, vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
    }

    #[test]
    fn constant_q_continuation() {
        let m = chain();
        let r = vec![0.5; 6];
        let pi0 = SoftPolicy::uniform(3, 2);
        let q = SoftValues { q: vec![vec![2.0; 2]; 3], v: vec![0.0; 3], beta: 1.0, theta_tag: None };
        let t = soft_bellman_apply(&m, &r, &pi0, 1.0, &q).unwrap();
        for row in &t.q {
            for &x in row {
                assert!((x - (0.5 + 0.9 * 2.0)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_reward_fixed_point_is_zero() {
        let m = chain();
        let pi0 = SoftPolicy::uniform(3, 2);
        let sol = soft_value_iteration(&m, &[0.0; 6], &pi0, 1.0, 1e-12, 1000).unwrap();
        assert!(sol.converged);
        assert!(sol.values.q.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn geometric_series_fixed_point() {
        let m = TabularMdp::new(vec![vec![vec![1.0]]], vec![1.0], 0.5, Horizon::Infinite).unwrap();
        let pi0 = SoftPolicy::uniform(1, 1);
        let sol = soft_value_iteration(&m, &[1.0], &pi0, 1.0, 1e-12, 1000).unwrap();
        assert!((sol.values.q[0][0] - 2.0).abs() < 1e-11);
    }

    #[test]
    fn non_convergence_is_reported() {
        let m = chain();
        let pi0 = SoftPolicy::uniform(3, 2);
        let sol = soft_value_iteration(&m, &[1.0; 6], &pi0, 1.0, 1e-12, 3).unwrap();
        assert!(!sol.converged);
        assert!(sol.residual > 1e-12);
    }

    #[test]
    fn policy_softmax_arithmetic() {
        let pi0 = SoftPolicy::uniform(1, 2);
        let v = SoftValues::from_q(vec![vec![1.0, 0.0]], &pi0, 1.0);
        let pi = optimal_soft_policy(&v, &pi0, 1.0);
        let e = std::f64::consts::E;
        assert!((pi.prob(0, 0) - e / (e + 1.0)).abs() < 1e-15);
        assert!((pi.prob(0, 1) - 1.0 / (e + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn constant_q_gives_reference() {
        let pi0 = SoftPolicy::from_rows(vec![vec![0.2, 0.3, 0.5]]).unwrap();
        let v = SoftValues::from_q(vec![vec![4.0; 3]], &pi0, 0.7);
        let pi = optimal_soft_policy(&v, &pi0, 0.7);
        assert!(pi.max_tv(&pi0) < 1e-15);
    }

    #[test]
    fn large_temperature_approaches_reference() {
        let pi0 = SoftPolicy::from_rows(vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.2, 0.2]]).unwrap();
        let v = SoftValues::from_q(vec![vec![1.0, -2.0, 3.0], vec![0.5, 0.0, -1.0]], &pi0, 1e6);
        let pi = optimal_soft_policy(&v, &pi0, 1e6);
        let sup = pi.probs.iter().flatten().zip(pi0.probs.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(sup < 1e-5);
    }

    #[test]
    fn huge_q_does_not_overflow() {
        let pi0 = SoftPolicy::uniform(1, 2);
        let v = SoftValues::from_q(vec![vec![5000.0, 4999.0]], &pi0, 1.0);
        assert!(v.v[0].is_finite());
        let pi = optimal_soft_policy(&v, &pi0, 1.0);
        assert!(pi.probs[0].iter().all(|p| p.is_finite()));
    }

    #[test]
    fn evaluation_of_reference_is_plain_evaluation() {
        let m = TabularMdp::new(vec![vec![vec![1.0]]], vec![1.0], 0.0, Horizon::Infinite).unwrap();
        let pi = SoftPolicy::uniform(1, 1);
        let v = soft_policy_evaluation(&m, &[1.0], &pi, &pi, 1.0, 1e-12).unwrap();
        assert_eq!(v.q[0][0], 1.0);
    }

    #[test]
    fn evaluation_rejects_mass_outside_reference_support() {
        let m = chain();
        let pi0 = SoftPolicy::from_rows(vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let pi = SoftPolicy::uniform(3, 2);
        assert!(matches!(
            soft_policy_evaluation(&m, &[0.0; 6], &pi, &pi0, 1.0, 1e-10),
            Err(AihfError::InfiniteKl { state: 0, action: 1 })
        ));
    }

    #[test]
    fn evaluation_of_optimal_policy_reproduces_fixed_point() {
        let m = chain();
        let r = vec![0.3, -0.2, 0.0, 0.4, 1.0, -1.0];
        let pi0 = SoftPolicy::from_rows(vec![vec![0.3, 0.7], vec![0.5, 0.5], vec![0.9, 0.1]]).unwrap();
        let tol = 1e-11;
        let sol = soft_value_iteration(&m, &r, &pi0, 0.8, tol, DEFAULT_MAX_ITER).unwrap();
        let pi = optimal_soft_policy(&sol.values, &pi0, 0.8);
        let ev = soft_policy_evaluation(&m, &r, &pi, &pi0, 0.8, tol).unwrap();
        assert!(sup_diff(&ev.q, &sol.values.q) <= 10.0 * tol);
    }

    #[test]
    fn l3_zero_reward_reference_policy() {
        let m = chain();
        let f = FeatureMap::one_hot(3, 2);
        let pi0 = SoftPolicy::uniform(3, 2);
        let l3 = l3_objective(&m, &RewardParams::zeros(6), &f, &pi0, &pi0, 1.0, 1e-10).unwrap();
        assert!(l3.abs() < 1e-14);
    }
}

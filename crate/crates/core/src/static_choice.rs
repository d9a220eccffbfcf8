//! Single-step choice problems: softmax choice, count-based estimators for
//! demonstrations and pairwise preferences, the RLHF composition, the joint
//! estimator, and DPO-style objectives over logits.

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AihfError, Result};
use crate::losses::{log_sigmoid, sigmoid};
use crate::rng::Seed;

pub const FIXED_POINT_TOL: f64 = 1e-12;
pub const FIXED_POINT_MAX_ITER: usize = 100_000;
pub const DAMPING: f64 = 0.5;
const RHO_GUARD: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticChoiceProblem {
    pub reward: Vec<f64>,
    pub beta: f64,
    #[serde(default)]
    pub reference_index: usize,
    #[serde(default)]
    pub reference_value: f64,
}

impl StaticChoiceProblem {
    pub fn new(reward: Vec<f64>, beta: f64) -> Result<Self> {
        if reward.len() < 2 {
            return Err(AihfError::Config("a choice problem needs at least two actions".into()));
        }
        if reward.iter().any(|r| !r.is_finite()) || !(beta > 0.0) {
            return Err(AihfError::Config("rewards must be finite and beta positive".into()));
        }
        Ok(StaticChoiceProblem { reward, beta, reference_index: 0, reference_value: 0.0 })
    }

    pub fn n_actions(&self) -> usize {
        self.reward.len()
    }
}

/// Demonstration counts and the win matrix `wins[i][j] = #{i beats j}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountData {
    pub demo_counts: Vec<u64>,
    pub pref_counts: Vec<Vec<u64>>,
}

impl CountData {
    pub fn new(demo_counts: Vec<u64>, pref_counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = demo_counts.len();
        if pref_counts.len() != n || pref_counts.iter().any(|r| r.len() != n) {
            return Err(AihfError::DimensionMismatch { expected: n, got: pref_counts.len() });
        }
        if (0..n).any(|i| pref_counts[i][i] != 0) {
            return Err(AihfError::Config("an action cannot be compared with itself".into()));
        }
        Ok(CountData { demo_counts, pref_counts })
    }

    pub fn demos_only(demo_counts: Vec<u64>) -> Self {
        let n = demo_counts.len();
        CountData { demo_counts, pref_counts: vec![vec![0; n]; n] }
    }

    /// Builds the win matrix from `(winner, loser)` pairs.
    pub fn from_pairs(demo_counts: Vec<u64>, pairs: &[(usize, usize)]) -> Result<Self> {
        let n = demo_counts.len();
        let mut wins = vec![vec![0u64; n]; n];
        for &(w, l) in pairs {
            if w >= n || l >= n {
                return Err(AihfError::IndexOutOfRange(format!("pair ({w}, {l}) with {n} actions")));
            }
            if w == l {
                return Err(AihfError::Config("an action cannot be compared with itself".into()));
            }
            wins[w][l] += 1;
        }
        Ok(CountData { demo_counts, pref_counts: wins })
    }

    pub fn n_actions(&self) -> usize {
        self.demo_counts.len()
    }

    pub fn total_demos(&self) -> u64 {
        self.demo_counts.iter().sum()
    }

    pub fn total_prefs(&self) -> u64 {
        self.pref_counts.iter().flatten().sum()
    }

    pub fn wins(&self, i: usize) -> u64 {
        self.pref_counts[i].iter().sum()
    }

    /// `|P_{i,j}|`, comparisons between `i` and `j` in either direction.
    pub fn pair_total(&self, i: usize, j: usize) -> u64 {
        self.pref_counts[i][j] + self.pref_counts[j][i]
    }

    fn components(&self) -> Vec<usize> {
        let n = self.n_actions();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            label[start] = next;
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    if label[j] == usize::MAX && self.pair_total(i, j) > 0 {
                        label[j] = next;
                        stack.push(j);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// True when every action is linked to every other through comparisons.
    pub fn is_connected(&self) -> bool {
        self.components().iter().all(|&c| c == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceDistribution {
    pub probs: Vec<f64>,
}

impl ChoiceDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let s: f64 = probs.iter().sum();
        if probs.iter().any(|&p| !(p >= 0.0)) || (s - 1.0).abs() > 1e-12 {
            return Err(AihfError::InvalidPolicy(format!("choice probabilities sum to {s}")));
        }
        Ok(ChoiceDistribution { probs })
    }

    pub fn uniform(n: usize) -> Self {
        ChoiceDistribution { probs: vec![1.0 / n as f64; n] }
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let s: f64 = weights.iter().sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(AihfError::Degenerate(format!("weights sum to {s}")));
        }
        Ok(ChoiceDistribution { probs: weights.iter().map(|w| w / s).collect() })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn tv(&self, other: &ChoiceDistribution) -> f64 {
        0.5 * self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    /// `beta (log pi_i - log pi_ref) + pinned`; zero-probability actions map to `-inf`.
    pub fn implicit_reward(&self, beta: f64, reference_index: usize, pinned: f64) -> Vec<f64> {
        let lref = self.probs[reference_index].ln();
        self.probs
            .iter()
            .map(|&p| if p > 0.0 { beta * (p.ln() - lref) + pinned } else { f64::NEG_INFINITY })
            .collect()
    }
}

/// Stabilized `softmax(r / beta)`.
pub fn softmax(r: &[f64], beta: f64) -> Vec<f64> {
    let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = r.iter().map(|&x| ((x - m) / beta).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn softmax_choice(problem: &StaticChoiceProblem) -> ChoiceDistribution {
    ChoiceDistribution { probs: softmax(&problem.reward, problem.beta) }
}

/// Empirical demonstration frequencies.
pub fn sft_estimator(counts: &CountData) -> Result<ChoiceDistribution> {
    let total = counts.total_demos();
    if total == 0 {
        return Err(AihfError::EmptyDataset("demonstration counts"));
    }
    Ok(ChoiceDistribution { probs: counts.demo_counts.iter().map(|&c| c as f64 / total as f64).collect() })
}

/// `(1 - sum_{k not in {i,j}} pi_k)^{-1}`, evaluated as `1 / (pi_i + pi_j)`.
pub fn rho_factor(dist: &ChoiceDistribution, i: usize, j: usize) -> Result<f64> {
    let n = dist.len();
    if i >= n || j >= n {
        return Err(AihfError::IndexOutOfRange(format!("pair ({i}, {j}) with {n} actions")));
    }
    if i == j {
        return Err(AihfError::Config("rho is defined for distinct actions".into()));
    }
    Ok(rho_unchecked(&dist.probs, i, j))
}

fn rho_unchecked(p: &[f64], i: usize, j: usize) -> f64 {
    1.0 / (p[i] + p[j]).max(RHO_GUARD)
}

/// Solution of a fixed-point estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub policy: ChoiceDistribution,
    /// Implicit reward pinned to zero at action 0.
    pub reward: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// `F_i(pi) = (lambda_d c_i + W_i) / (lambda_d |D| + sum_j |P_ij| rho_ij(pi))`.
fn fixed_point_map(counts: &CountData, with_demos: bool, p: &[f64]) -> Vec<f64> {
    let n = p.len();
    let d_total = if with_demos { counts.total_demos() as f64 } else { 0.0 };
    (0..n)
        .map(|i| {
            let num = if with_demos { counts.demo_counts[i] as f64 } else { 0.0 } + counts.wins(i) as f64;
            if num == 0.0 {
                return 0.0;
            }
            let mut den = d_total;
            for j in 0..n {
                if j != i {
                    let nij = counts.pair_total(i, j);
                    if nij > 0 {
                        den += nij as f64 * rho_unchecked(p, i, j);
                    }
                }
            }
            num / den
        })
        .collect()
}

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Damped iteration `x <- (1 - lambda) x + lambda F(x)` with renormalization.
/// Falls back to likelihood ascent in logit space if the residual stalls.
fn solve_fixed_point(counts: &CountData, with_demos: bool, beta: f64) -> Result<Estimate> {
    let n = counts.n_actions();
    let mut p = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..FIXED_POINT_MAX_ITER {
        let f = fixed_point_map(counts, with_demos, &p);
        residual = sup_gap(&f, &p);
        iterations = it;
        if residual <= FIXED_POINT_TOL {
            break;
        }
        for (x, fx) in p.iter_mut().zip(&f) {
            *x = (1.0 - DAMPING) * *x + DAMPING * fx;
        }
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= s);
    }
    if residual > FIXED_POINT_TOL {
        let support: Vec<bool> = (0..n)
            .map(|i| counts.wins(i) > 0 || (with_demos && counts.demo_counts[i] > 0))
            .collect();
        let weights = LogitObjective::Likelihood { with_demos };
        let z = maximize_logits(counts, &support, &weights, &vec![0.0; n], 1.0, 1.0)?;
        let q = masked_softmax(&z, &support);
        let r = sup_gap(&fixed_point_map(counts, with_demos, &q), &q);
        if r < residual {
            p = q;
            residual = r;
        }
        if residual > 1e-9 {
            return Err(AihfError::NoConvergence { iterations: FIXED_POINT_MAX_ITER, residual });
        }
    }
    // One undamped step is exact when the map is constant (no comparisons).
    let f = fixed_point_map(counts, with_demos, &p);
    let s: f64 = f.iter().sum();
    let polished: Vec<f64> = f.iter().map(|x| x / s).collect();
    let r = sup_gap(&fixed_point_map(counts, with_demos, &polished), &polished);
    if r < residual {
        p = polished;
        residual = r;
    }
    let policy = ChoiceDistribution { probs: p };
    let reward = policy.implicit_reward(beta, 0, 0.0);
    Ok(Estimate { policy, reward, residual, iterations })
}

/// Bradley-Terry maximum likelihood over softmax policies.
pub fn preference_mle(counts: &CountData, beta: f64) -> Result<Estimate> {
    if counts.total_prefs() == 0 {
        return Err(AihfError::EmptyDataset("preference counts"));
    }
    let labels = counts.components();
    if let Some(i) = labels.iter().position(|&c| c != 0) {
        return Err(AihfError::DisconnectedComparisons(format!("action {i} is not linked to action 0")));
    }
    solve_fixed_point(counts, false, beta)
}

/// Policy maximizing `|D| L1 + |P| L2` over softmax policies.
pub fn aihf_estimator(counts: &CountData, beta: f64) -> Result<Estimate> {
    if counts.total_demos() + counts.total_prefs() == 0 {
        return Err(AihfError::EmptyDataset("demonstration and preference counts"));
    }
    let labels = counts.components();
    let n_comp = labels.iter().max().map_or(0, |m| m + 1);
    if n_comp > 1 {
        for c in 0..n_comp {
            let covered = (0..counts.n_actions()).any(|i| labels[i] == c && counts.demo_counts[i] > 0);
            let evidence = (0..counts.n_actions()).any(|i| labels[i] == c && counts.wins(i) > 0);
            if evidence && !covered {
                return Err(AihfError::Degenerate(
                    "a comparison component has no demonstrations, so its mass is not identified".into(),
                ));
            }
        }
    }
    solve_fixed_point(counts, true, beta)
}

/// `pi ∝ pi_SFT * pi_P`, the softmax of the summed implicit rewards. Actions
/// without demonstrations get probability zero.
pub fn rlhf_policy(counts: &CountData, beta: f64) -> Result<ChoiceDistribution> {
    let sft = sft_estimator(counts)?;
    let pref = preference_mle(counts, beta)?;
    let w: Vec<f64> = sft.probs.iter().zip(&pref.policy.probs).map(|(a, b)| a * b).collect();
    ChoiceDistribution::from_weights(&w)
        .map_err(|_| AihfError::Degenerate("demonstration and preference supports are disjoint".into()))
}

/// Largest deviation between the joint estimator and the weighted average
/// `w_D,i pi_SFT_i + w_P,i pi_P_i` with
/// `w_D,i = |D| / den_i`, `w_P,i = sum_j |P_ij| rho_ij(pi_P) / den_i`,
/// `den_i = |D| + sum_j |P_ij| rho_ij(pi_AIHF)`.
pub fn aihf_weighted_average_check(counts: &CountData, beta: f64) -> Result<f64> {
    let aihf = aihf_estimator(counts, beta)?;
    let sft = sft_estimator(counts)?;
    let n = counts.n_actions();
    let d = counts.total_demos() as f64;
    let pref = if counts.total_prefs() > 0 { Some(preference_mle(counts, beta)?) } else { None };
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let mut den = d;
        let mut w_p = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            let nij = counts.pair_total(i, j) as f64;
            if nij == 0.0 {
                continue;
            }
            den += nij * rho_unchecked(&aihf.policy.probs, i, j);
            if let Some(p) = &pref {
                w_p += nij * rho_unchecked(&p.policy.probs, i, j);
            }
        }
        let pref_i = pref.as_ref().map_or(0.0, |p| p.policy.probs[i]);
        let avg = if den == d { sft.probs[i] } else { (d * sft.probs[i] + w_p * pref_i) / den };
        worst = worst.max((aihf.policy.probs[i] - avg).abs());
    }
    Ok(worst)
}

/// `sum_i c_i log pi_i + sum_{i,j} W_ij log(pi_i / (pi_i + pi_j))`.
pub fn static_log_likelihood(counts: &CountData, probs: &[f64], with_demos: bool) -> f64 {
    let n = counts.n_actions();
    let mut total = 0.0;
    for i in 0..n {
        if with_demos && counts.demo_counts[i] > 0 {
            total += counts.demo_counts[i] as f64 * probs[i].ln();
        }
        for j in 0..n {
            let w = counts.pref_counts[i][j];
            if w > 0 {
                total += w as f64 * (probs[i] / (probs[i] + probs[j])).ln();
            }
        }
    }
    total
}

/// Objectives maximized over logits `z`, with `pi = softmax(z)` on a support.
#[derive(Debug, Clone, Copy)]
enum LogitObjective {
    Likelihood { with_demos: bool },
    Direct { w1: f64 },
    SelfPlay { w1: f64 },
}

fn masked_softmax(z: &[f64], support: &[bool]) -> Vec<f64> {
    let m = z.iter().zip(support).filter(|(_, &s)| s).map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().zip(support).map(|(&v, &s)| if s { (v - m).exp() } else { 0.0 }).collect();
    let t: f64 = e.iter().sum();
    e.into_iter().map(|x| x / t).collect()
}

/// Value and gradient (w.r.t. `z`) of an objective. `lp0` holds `log pi0`.
fn logit_eval(
    counts: &CountData,
    support: &[bool],
    obj: &LogitObjective,
    z: &[f64],
    lp0: &[f64],
    beta: f64,
) -> (f64, Vec<f64>) {
    let n = z.len();
    let p = masked_softmax(z, support);
    let mut val = 0.0;
    let mut g = vec![0.0; n];
    let demo_total = counts.total_demos() as f64;
    let pref_total = counts.total_prefs() as f64;
    let in_supp = |i: usize| support[i];
    // Demonstration log-likelihood: c_i (z_i - lse) has gradient c_i (e_i - p).
    let demo_ll = |scale: f64, val: &mut f64, g: &mut [f64]| {
        for i in (0..n).filter(|&i| in_supp(i) && counts.demo_counts[i] > 0) {
            let c = scale * counts.demo_counts[i] as f64;
            *val += c * p[i].ln();
            g[i] += c;
            for k in (0..n).filter(|&k| in_supp(k)) {
                g[k] -= c * p[k];
            }
        }
    };
    // Pairwise term log sigma(beta ((z_i - lp0_i) - (z_j - lp0_j))).
    let dpo = |scale: f64, val: &mut f64, g: &mut [f64]| {
        for i in 0..n {
            for j in 0..n {
                let w = counts.pref_counts[i][j];
                if w == 0 || !in_supp(i) || !in_supp(j) {
                    continue;
                }
                let x = beta * ((z[i] - lp0[i]) - (z[j] - lp0[j]));
                let c = scale * w as f64;
                *val += c * log_sigmoid(x);
                let d = c * beta * (1.0 - sigmoid(x));
                g[i] += d;
                g[j] -= d;
            }
        }
    };
    match *obj {
        LogitObjective::Likelihood { with_demos } => {
            if with_demos {
                demo_ll(1.0, &mut val, &mut g);
            }
            // log(pi_i / (pi_i + pi_j)) = log sigma(z_i - z_j).
            for i in 0..n {
                for j in 0..n {
                    let w = counts.pref_counts[i][j];
                    if w == 0 || !in_supp(i) || !in_supp(j) {
                        continue;
                    }
                    let x = z[i] - z[j];
                    val += w as f64 * log_sigmoid(x);
                    let d = w as f64 * (1.0 - sigmoid(x));
                    g[i] += d;
                    g[j] -= d;
                }
            }
        }
        LogitObjective::Direct { w1 } => {
            if w1 > 0.0 && demo_total > 0.0 {
                demo_ll(w1 / demo_total, &mut val, &mut g);
            }
            if pref_total > 0.0 {
                dpo(1.0 / pref_total, &mut val, &mut g);
            }
        }
        LogitObjective::SelfPlay { w1 } => {
            if w1 > 0.0 && demo_total > 0.0 {
                // sum_E c_E/|D| sum_a p_a f(u_E - u_a), u = beta (z - lp0).
                let u: Vec<f64> = (0..n).map(|i| beta * (z[i] - lp0[i])).collect();
                for e in (0..n).filter(|&e| in_supp(e) && counts.demo_counts[e] > 0) {
                    let ce = w1 * counts.demo_counts[e] as f64 / demo_total;
                    let mut inner = 0.0;
                    let mut fa = vec![0.0; n];
                    for a in (0..n).filter(|&a| in_supp(a)) {
                        let x = u[e] - u[a];
                        fa[a] = log_sigmoid(x);
                        inner += p[a] * fa[a];
                        let d = ce * p[a] * beta * (1.0 - sigmoid(x));
                        g[e] += d;
                        g[a] -= d;
                    }
                    val += ce * inner;
                    // Through p: d p_a / d z_k = p_a (delta_ak - p_k).
                    for k in (0..n).filter(|&k| in_supp(k)) {
                        g[k] += ce * p[k] * (fa[k] - inner);
                    }
                }
            }
            if pref_total > 0.0 {
                dpo(1.0 / pref_total, &mut val, &mut g);
            }
        }
    }
    for (gi, &s) in g.iter_mut().zip(support) {
        if !s {
            *gi = 0.0;
        }
    }
    (val, g)
}

/// Gradient ascent with Barzilai-Borwein steps and an Armijo safeguard.
fn maximize_logits(
    counts: &CountData,
    support: &[bool],
    obj: &LogitObjective,
    lp0: &[f64],
    beta: f64,
    grad_scale: f64,
) -> Result<Vec<f64>> {
    const MAX_ITER: usize = 200_000;
    const GRAD_TOL: f64 = 1e-11;
    let mut z: Vec<f64> = lp0.iter().map(|&v| if v.is_finite() { v } else { 0.0 }).collect();
    let (mut f, mut g) = logit_eval(counts, support, obj, &z, lp0, beta);
    let mut step = 1.0 / grad_scale.max(1e-12);
    const STALL_TOL: f64 = 1e-7;
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut stalled = 0;
    for _ in 0..MAX_ITER {
        let gn = norm(&g);
        if gn <= GRAD_TOL * grad_scale.max(1.0) {
            return Ok(z);
        }
        // Near the optimum the objective stops changing in f64; accept once the
        // gradient is already small and 50 accepted steps brought no increase.
        if gn <= STALL_TOL * grad_scale.max(1.0) && stalled >= 50 {
            return Ok(z);
        }
        let mut t = step;
        let (mut zn, mut fnew, mut gnew);
        loop {
            zn = z.iter().zip(&g).map(|(a, b)| a + t * b).collect::<Vec<_>>();
            (fnew, gnew) = logit_eval(counts, support, obj, &zn, lp0, beta);
            if fnew >= f + 1e-4 * t * gn * gn || t < 1e-20 {
                break;
            }
            t *= 0.5;
        }
        if t < 1e-20 {
            return Ok(z);
        }
        let s: Vec<f64> = zn.iter().zip(&z).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        step = if sy < 0.0 { (ss / -sy).clamp(1e-10, 1e10) } else { (2.0 * t).min(1e10) };
        stalled = if fnew > f { 0 } else { stalled + 1 };
        z = zn;
        f = fnew;
        g = gnew;
    }
    let residual = norm(&g);
    Err(AihfError::NoConvergence { iterations: MAX_ITER, residual })
}

fn check_pi0(counts: &CountData, pi0: &ChoiceDistribution, w1: f64, beta: f64) -> Result<Vec<f64>> {
    if pi0.len() != counts.n_actions() {
        return Err(AihfError::DimensionMismatch { expected: counts.n_actions(), got: pi0.len() });
    }
    if pi0.probs.iter().any(|&p| !(p > 0.0)) {
        return Err(AihfError::InvalidPolicy("reference choice distribution needs full support".into()));
    }
    if !(beta > 0.0) || !(w1 >= 0.0) {
        return Err(AihfError::Config("beta must be positive and w1 non-negative".into()));
    }
    Ok(pi0.probs.iter().map(|p| p.ln()).collect())
}

/// Actions that keep positive mass at the optimum: those with demonstrations
/// or wins, plus (when the demonstration term is off) actions that never
/// appear in a comparison, which the objective does not touch.
fn evidence_support(counts: &CountData, w1: f64) -> Vec<bool> {
    let n = counts.n_actions();
    (0..n)
        .map(|i| {
            let compared = (0..n).any(|j| counts.pair_total(i, j) > 0);
            counts.wins(i) > 0 || (w1 > 0.0 && counts.demo_counts[i] > 0) || (w1 == 0.0 && !compared)
        })
        .collect()
}

fn static_solve(counts: &CountData, pi0: &ChoiceDistribution, w1: f64, beta: f64, obj: LogitObjective) -> Result<ChoiceDistribution> {
    let lp0 = check_pi0(counts, pi0, w1, beta)?;
    if counts.total_prefs() == 0 && (w1 == 0.0 || counts.total_demos() == 0) {
        return Err(AihfError::EmptyDataset("demonstration and preference counts"));
    }
    let support = evidence_support(counts, w1);
    let z = maximize_logits(counts, &support, &obj, &lp0, beta, (1.0 + w1) * beta.max(1.0))?;
    Ok(ChoiceDistribution { probs: masked_softmax(&z, &support) })
}

/// Mean-normalized objective
/// `w1 E_D[log pi(a)] + E_P[log sigma(beta log(pi(a_w)/pi0(a_w)) - beta log(pi(a_l)/pi0(a_l)))]`
/// at `pi = softmax(z)`.
pub fn direct_aihf_objective(counts: &CountData, pi0: &ChoiceDistribution, w1: f64, beta: f64, z: &[f64]) -> Result<f64> {
    let lp0 = check_pi0(counts, pi0, w1, beta)?;
    Ok(logit_eval(counts, &vec![true; z.len()], &LogitObjective::Direct { w1 }, z, &lp0, beta).0)
}

pub fn direct_aihf_gradient(counts: &CountData, pi0: &ChoiceDistribution, w1: f64, beta: f64, z: &[f64]) -> Result<Vec<f64>> {
    let lp0 = check_pi0(counts, pi0, w1, beta)?;
    Ok(logit_eval(counts, &vec![true; z.len()], &LogitObjective::Direct { w1 }, z, &lp0, beta).1)
}

/// Maximizer of [`direct_aihf_objective`] over the simplex.
pub fn direct_aihf_static(counts: &CountData, pi0: &ChoiceDistribution, w1: f64, beta: f64) -> Result<ChoiceDistribution> {
    static_solve(counts, pi0, w1, beta, LogitObjective::Direct { w1 })
}

/// `w1 E_{a_E ~ D} sum_a pi(a) log sigma(beta log(pi(a_E)/pi0(a_E)) - beta log(pi(a)/pi0(a)))`
/// plus the preference term of [`direct_aihf_objective`].
pub fn selfplay_aihf_objective(counts: &CountData, pi0: &ChoiceDistribution, w1: f64, beta: f64, z: &[f64]) -> Result<f64> {
    let lp0 = check_pi0(counts, pi0, w1, beta)?;
    Ok(logit_eval(counts, &vec![true; z.len()], &LogitObjective::SelfPlay { w1 }, z, &lp0, beta).0)
}

pub fn selfplay_aihf_gradient(counts: &CountData, pi0: &ChoiceDistribution, w1: f64, beta: f64, z: &[f64]) -> Result<Vec<f64>> {
    let lp0 = check_pi0(counts, pi0, w1, beta)?;
    Ok(logit_eval(counts, &vec![true; z.len()], &LogitObjective::SelfPlay { w1 }, z, &lp0, beta).1)
}

/// Maximizer of [`selfplay_aihf_objective`] reached by ascent from `pi0`.
pub fn selfplay_aihf_static(counts: &CountData, pi0: &ChoiceDistribution, w1: f64, beta: f64) -> Result<ChoiceDistribution> {
    static_solve(counts, pi0, w1, beta, LogitObjective::SelfPlay { w1 })
}

/// Draws demonstrations from the softmax restricted to `coverage` and, for
/// every unordered pair, `prefs_per_pair` BTL comparisons.
pub fn sample_static_datasets(
    truth: &StaticChoiceProblem,
    n_demos: u64,
    prefs_per_pair: u64,
    coverage: Option<&[usize]>,
    seed: Seed,
) -> Result<CountData> {
    let n = truth.n_actions();
    let mut weights = softmax(&truth.reward, truth.beta);
    if let Some(cov) = coverage {
        if cov.is_empty() {
            return Err(AihfError::Config("coverage set is empty".into()));
        }
        if let Some(&bad) = cov.iter().find(|&&i| i >= n) {
            return Err(AihfError::IndexOutOfRange(format!("coverage action {bad}")));
        }
        let mut mask = vec![0.0; n];
        cov.iter().for_each(|&i| mask[i] = 1.0);
        weights.iter_mut().zip(&mask).for_each(|(w, m)| *w *= m);
    }
    let mut demo_counts = vec![0u64; n];
    let mut rng = seed.split(0).rng();
    for _ in 0..n_demos {
        demo_counts[rng.categorical(&weights)] += 1;
    }
    let mut wins = vec![vec![0u64; n]; n];
    if prefs_per_pair > 0 {
        let mut rng = seed.split(1).rng();
        for i in 0..n {
            for j in (i + 1)..n {
                let p = sigmoid((truth.reward[i] - truth.reward[j]) / truth.beta);
                let w = Binomial::new(prefs_per_pair, p)
                    .map_err(|e| AihfError::Config(e.to_string()))?
                    .sample(rng.inner());
                wins[i][j] = w;
                wins[j][i] = prefs_per_pair - w;
            }
        }
    }
    Ok(CountData { demo_counts, pref_counts: wins })
}

/// Reward of action `i` (0-based) in the coverage experiment: a Gaussian
/// density with mean 0.5 and standard deviation 2 evaluated at `(i+1)/50`.
pub fn example2_reward(n: usize) -> Vec<f64> {
    let (mu, sd) = (0.5, 2.0);
    (1..=n)
        .map(|i| {
            let x = i as f64 / n as f64;
            (-(x - mu).powi(2) / (2.0 * sd * sd)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example2Config {
    pub n_actions: usize,
    /// Number of leading actions that appear in demonstrations.
    pub covered: usize,
    pub n_demos: u64,
    pub prefs_per_pair: u64,
    pub beta: f64,
}

impl Default for Example2Config {
    fn default() -> Self {
        Example2Config { n_actions: 50, covered: 45, n_demos: 2000, prefs_per_pair: 200, beta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub name: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub tv_to_truth: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example2Report {
    pub config: Example2Config,
    pub truth: Vec<f64>,
    pub methods: Vec<MethodSummary>,
    /// Largest mass any repeat puts on an uncovered action, per method.
    pub max_uncovered_mass: Vec<(String, f64)>,
    /// Smallest mass the joint estimator puts on an uncovered action.
    pub min_aihf_uncovered_mass: f64,
    /// Repeats in which the joint estimator is closer to the truth than RLHF.
    pub aihf_wins: usize,
    pub repeats: usize,
}

impl Example2Report {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.name == name)
    }

    /// `action,method,mean,std` rows, 1-based actions.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("action,method,mean,std\n");
        for i in 0..self.truth.len() {
            out.push_str(&format!("{},truth,{},0\n", i + 1, self.truth[i]));
            for m in &self.methods {
                out.push_str(&format!("{},{},{},{}\n", i + 1, m.name, m.mean[i], m.std[i]));
            }
        }
        out
    }
}

/// Repeats the limited-coverage experiment and summarizes SFT, RLHF and the
/// joint estimator against the full-support truth.
pub fn run_example2(seed: Seed, repeats: usize, config: &Example2Config) -> Result<Example2Report> {
    if repeats == 0 {
        return Err(AihfError::Config("repeats must be at least 1".into()));
    }
    let n = config.n_actions;
    let problem = StaticChoiceProblem::new(example2_reward(n), config.beta)?;
    let truth = ChoiceDistribution { probs: softmax_choice(&problem).probs };
    let coverage: Vec<usize> = (0..config.covered).collect();
    let runs: Vec<Result<[ChoiceDistribution; 3]>> = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let data = sample_static_datasets(&problem, config.n_demos, config.prefs_per_pair, Some(&coverage), seed.split(r as u64))?;
            let sft = sft_estimator(&data)?;
            let rlhf = rlhf_policy(&data, config.beta)?;
            let aihf = aihf_estimator(&data, config.beta)?.policy;
            Ok([sft, rlhf, aihf])
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let names = ["sft", "rlhf", "aihf"];
    let mut methods = Vec::new();
    let mut max_uncovered_mass = Vec::new();
    for (m, name) in names.iter().enumerate() {
        let mut mean = vec![0.0; n];
        for run in &runs {
            mean.iter_mut().zip(&run[m].probs).for_each(|(a, p)| *a += p / repeats as f64);
        }
        let mut std = vec![0.0; n];
        if repeats > 1 {
            for run in &runs {
                std.iter_mut().zip(&run[m].probs).zip(&mean).for_each(|((s, p), mu)| *s += (p - mu).powi(2));
            }
            std.iter_mut().for_each(|s| *s = (*s / (repeats - 1) as f64).sqrt());
        }
        let tv_to_truth = runs.iter().map(|run| run[m].tv(&truth)).collect();
        let unc = runs.iter().flat_map(|run| run[m].probs[config.covered..].to_vec()).fold(0.0, f64::max);
        max_uncovered_mass.push((name.to_string(), unc));
        methods.push(MethodSummary { name: name.to_string(), mean, std, tv_to_truth });
    }
    let min_aihf_uncovered_mass =
        runs.iter().flat_map(|run| run[2].probs[config.covered..].to_vec()).fold(f64::INFINITY, f64::min);
    let aihf_wins = (0..repeats).filter(|&r| methods[2].tv_to_truth[r] < methods[1].tv_to_truth[r]).count();
    Ok(Example2Report {
        config: config.clone(),
        truth: truth.probs,
        methods,
        max_uncovered_mass,
        min_aihf_uncovered_mass,
        aihf_wins,
        repeats,
    })
}

//! Synthetic datasets driven by a known reward: an expert, a ladder of
//! weaker policies, demonstrations from the expert and BTL-labelled
//! comparisons between weaker policies.

use serde::{Deserialize, Serialize};

use crate::error::{AihfError, Result};
use crate::losses::sigmoid;
use crate::mdp::{sample_trajectory, DemonstrationSet, PreferencePair, PreferenceSet, TabularMdp};
use crate::reward::{reward_table, trajectory_reward, FeatureMap, RewardParams};
use crate::rng::Seed;
use crate::soft_rl::{l3_objective_table, solve_soft_optimal, SoftPolicy, DEFAULT_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub theta_star: RewardParams,
    pub fmap: FeatureMap,
    pub beta: f64,
    pub expert_policy: SoftPolicy,
    /// Weakest first; the last tier is the expert.
    pub tier_policies: Vec<SoftPolicy>,
    pub tier_lambdas: Vec<f64>,
    /// KL-regularized value of each tier under the true reward.
    pub tier_values: Vec<f64>,
}

impl GroundTruth {
    pub fn n_tiers(&self) -> usize {
        self.tier_policies.len()
    }
}

/// `pi_lambda ∝ pi0^{1-lambda} pi_E^lambda`, row by row.
pub fn interpolate_policy(pi0: &SoftPolicy, expert: &SoftPolicy, lambda: f64) -> SoftPolicy {
    let probs = pi0
        .probs
        .iter()
        .zip(&expert.probs)
        .map(|(r0, re)| {
            let w: Vec<f64> = r0
                .iter()
                .zip(re)
                .map(|(&a, &b)| if a > 0.0 && b > 0.0 { ((1.0 - lambda) * a.ln() + lambda * b.ln()).exp() } else { 0.0 })
                .collect();
            let z: f64 = w.iter().sum();
            w.into_iter().map(|x| x / z).collect()
        })
        .collect();
    SoftPolicy::from_rows_unchecked(probs)
}

/// Geometric interpolation weights `2^{-(n-1-k)}`, ending at 1.
pub fn tier_lambdas(n_tiers: usize) -> Vec<f64> {
    (0..n_tiers).map(|k| 0.5f64.powi((n_tiers - 1 - k) as i32)).collect()
}

pub fn make_ground_truth(
    mdp: &TabularMdp,
    theta_star: &RewardParams,
    fmap: &FeatureMap,
    pi0: &SoftPolicy,
    beta: f64,
    n_tiers: usize,
) -> Result<GroundTruth> {
    if n_tiers == 0 {
        return Err(AihfError::Config("at least one tier is required".into()));
    }
    let table = reward_table(theta_star, fmap)?;
    let (expert, sol) = solve_soft_optimal(mdp, &table, pi0, beta, DEFAULT_TOL)?;
    if !sol.converged {
        return Err(AihfError::NoConvergence { iterations: sol.iterations, residual: sol.residual });
    }
    let lambdas = tier_lambdas(n_tiers);
    let mut tiers: Vec<(f64, f64, SoftPolicy)> = Vec::with_capacity(n_tiers);
    for &l in &lambdas {
        let pi = if l == 1.0 { expert.clone() } else { interpolate_policy(pi0, &expert, l) };
        let v = l3_objective_table(mdp, &table, &pi, pi0, beta, DEFAULT_TOL)?;
        tiers.push((v, l, pi));
    }
    tiers.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(GroundTruth {
        theta_star: theta_star.clone(),
        fmap: fmap.clone(),
        beta,
        expert_policy: expert,
        tier_values: tiers.iter().map(|t| t.0).collect(),
        tier_lambdas: tiers.iter().map(|t| t.1).collect(),
        tier_policies: tiers.into_iter().map(|t| t.2).collect(),
    })
}

/// `n` expert trajectories.
pub fn sample_demonstrations(gt: &GroundTruth, mdp: &TabularMdp, n: usize, length: usize, seed: Seed) -> Result<DemonstrationSet> {
    if n == 0 {
        return Err(AihfError::Config("n must be at least 1".into()));
    }
    let expert = gt.tier_policies.last().expect("ground truth has at least one tier");
    let trajectories = (0..n)
        .map(|i| sample_trajectory(mdp, expert, length, seed.split(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DemonstrationSet::new(trajectories))
}

/// Draws one trajectory from each of the two tiers and labels the winner
/// with probability `sigma((R(a) - R(b)) / beta_pref)` under the true reward.
#[allow(clippy::too_many_arguments)]
pub fn sample_preferences(
    gt: &GroundTruth,
    mdp: &TabularMdp,
    n_pairs: usize,
    length: usize,
    tier_pair: (usize, usize),
    beta_pref: f64,
    seed: Seed,
) -> Result<PreferenceSet> {
    let (lo, mid) = tier_pair;
    if lo >= gt.n_tiers() || mid >= gt.n_tiers() {
        return Err(AihfError::IndexOutOfRange(format!("tier pair ({lo}, {mid}) with {} tiers", gt.n_tiers())));
    }
    if !(beta_pref > 0.0) {
        return Err(AihfError::Config("beta_pref must be positive".into()));
    }
    let mut pairs = Vec::with_capacity(n_pairs);
    for i in 0..n_pairs {
        let s = seed.split(i as u64);
        let a = sample_trajectory(mdp, &gt.tier_policies[lo], length, s.split(0))?;
        let b = sample_trajectory(mdp, &gt.tier_policies[mid], length, s.split(1))?;
        let gap = trajectory_reward(&gt.theta_star, &gt.fmap, &a, mdp.gamma())?
            - trajectory_reward(&gt.theta_star, &gt.fmap, &b, mdp.gamma())?;
        let a_wins = s.split(2).rng().bernoulli(sigmoid(gap / beta_pref));
        pairs.push(if a_wins { PreferencePair { winner: a, loser: b } } else { PreferencePair { winner: b, loser: a } });
    }
    Ok(PreferenceSet::new(pairs))
}

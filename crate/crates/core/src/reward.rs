//! Linear reward models `r(s,a; theta) = <theta, phi(s,a)>`.

use serde::{Deserialize, Serialize};

use crate::error::{AihfError, Result};
use crate::mdp::Trajectory;

/// Feature table `phi(s,a)` for every state-action pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub n_states: usize,
    pub n_actions: usize,
    pub dim: usize,
    /// One row per `(s,a)`, flattened as `s * n_actions + a`.
    pub features: Vec<Vec<f64>>,
    /// When set, rewards are clamped to `[-bound, bound]` and their gradient
    /// vanishes wherever the clamp is active.
    #[serde(default)]
    pub clamp: Option<f64>,
}

impl FeatureMap {
    /// Indicator features: `dim = n_states * n_actions`.
    pub fn one_hot(n_states: usize, n_actions: usize) -> Self {
        let dim = n_states * n_actions;
        let features = (0..dim)
            .map(|i| {
                let mut row = vec![0.0; dim];
                row[i] = 1.0;
                row
            })
            .collect();
        FeatureMap { n_states, n_actions, dim, features, clamp: None }
    }

    pub fn new(n_states: usize, n_actions: usize, features: Vec<Vec<f64>>) -> Result<Self> {
        if features.len() != n_states * n_actions {
            return Err(AihfError::DimensionMismatch { expected: n_states * n_actions, got: features.len() });
        }
        let dim = features.first().map_or(0, |f| f.len());
        if let Some(bad) = features.iter().find(|f| f.len() != dim) {
            return Err(AihfError::DimensionMismatch { expected: dim, got: bad.len() });
        }
        Ok(FeatureMap { n_states, n_actions, dim, features, clamp: None })
    }

    pub fn with_clamp(mut self, bound: f64) -> Self {
        self.clamp = Some(bound);
        self
    }

    pub fn phi(&self, s: usize, a: usize) -> &[f64] {
        &self.features[s * self.n_actions + a]
    }

    /// True for the indicator feature map, where adding a constant to every
    /// entry of theta shifts all rewards by that constant.
    pub fn is_one_hot(&self) -> bool {
        self.dim == self.n_states * self.n_actions
            && self.features.iter().enumerate().all(|(i, row)| {
                row.iter().enumerate().all(|(j, &v)| v == if i == j { 1.0 } else { 0.0 })
            })
    }
}

/// Reward parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub theta: Vec<f64>,
}

impl RewardParams {
    pub fn zeros(dim: usize) -> Self {
        RewardParams { theta: vec![0.0; dim] }
    }

    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(AihfError::Degenerate("reward parameters must be finite".into()));
        }
        Ok(RewardParams { theta })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn norm(&self) -> f64 {
        self.theta.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn check_dim(theta: &RewardParams, fmap: &FeatureMap) -> Result<()> {
    if theta.dim() != fmap.dim {
        return Err(AihfError::DimensionMismatch { expected: fmap.dim, got: theta.dim() });
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn raw_reward(theta: &RewardParams, fmap: &FeatureMap, s: usize, a: usize) -> f64 {
    dot(&theta.theta, fmap.phi(s, a))
}

fn clamp_active(fmap: &FeatureMap, raw: f64) -> bool {
    fmap.clamp.is_some_and(|b| raw.abs() > b)
}

/// `r(s,a; theta)`.
pub fn reward(theta: &RewardParams, fmap: &FeatureMap, s: usize, a: usize) -> Result<f64> {
    check_dim(theta, fmap)?;
    if s >= fmap.n_states || a >= fmap.n_actions {
        return Err(AihfError::IndexOutOfRange(format!("(s={s}, a={a})")));
    }
    let raw = raw_reward(theta, fmap, s, a);
    Ok(match fmap.clamp {
        Some(b) => raw.clamp(-b, b),
        None => raw,
    })
}

/// Materialized reward table, flattened as `s * n_actions + a`.
pub fn reward_table(theta: &RewardParams, fmap: &FeatureMap) -> Result<Vec<f64>> {
    check_dim(theta, fmap)?;
    let mut out = Vec::with_capacity(fmap.n_states * fmap.n_actions);
    for s in 0..fmap.n_states {
        for a in 0..fmap.n_actions {
            out.push(reward(theta, fmap, s, a)?);
        }
    }
    Ok(out)
}

/// `grad_theta r(s,a; theta)` for every pair. Equal to `phi` unless the
/// clamp is active.
pub fn reward_gradient_table(theta: &RewardParams, fmap: &FeatureMap) -> Result<Vec<Vec<f64>>> {
    check_dim(theta, fmap)?;
    let mut out = Vec::with_capacity(fmap.features.len());
    for s in 0..fmap.n_states {
        for a in 0..fmap.n_actions {
            if clamp_active(fmap, raw_reward(theta, fmap, s, a)) {
                out.push(vec![0.0; fmap.dim]);
            } else {
                out.push(fmap.phi(s, a).to_vec());
            }
        }
    }
    Ok(out)
}

/// `R(tau; theta) = sum_t gamma^t r(s_t, a_t; theta)`.
pub fn trajectory_reward(theta: &RewardParams, fmap: &FeatureMap, trajectory: &Trajectory, gamma: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut w = 1.0;
    for &(s, a) in &trajectory.steps {
        total += w * reward(theta, fmap, s, a)?;
        w *= gamma;
    }
    Ok(total)
}

/// `grad_theta R(tau; theta) = sum_t gamma^t grad r(s_t, a_t; theta)`.
pub fn trajectory_reward_gradient(
    theta: &RewardParams,
    fmap: &FeatureMap,
    trajectory: &Trajectory,
    gamma: f64,
) -> Result<Vec<f64>> {
    check_dim(theta, fmap)?;
    let mut g = vec![0.0; fmap.dim];
    let mut w = 1.0;
    for &(s, a) in &trajectory.steps {
        if s >= fmap.n_states || a >= fmap.n_actions {
            return Err(AihfError::IndexOutOfRange(format!("(s={s}, a={a})")));
        }
        if !clamp_active(fmap, raw_reward(theta, fmap, s, a)) {
            for (gi, &p) in g.iter_mut().zip(fmap.phi(s, a)) {
                *gi += w * p;
            }
        }
        w *= gamma;
    }
    Ok(g)
}

/// `sum_{s,a} weights(s,a) grad r(s,a)`; the feature expectation of an
/// occupancy measure.
pub fn feature_expectation(grad_table: &[Vec<f64>], weights: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (row, &w) in grad_table.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (o, &p) in out.iter_mut().zip(row) {
            *o += w * p;
        }
    }
    out
}

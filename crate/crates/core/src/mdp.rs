//! Finite MDPs, trajectories and datasets.

use serde::{Deserialize, Serialize};

use crate::error::{AihfError, Result};
use crate::linalg;
use crate::rng::Seed;
use crate::soft_rl::SoftPolicy;

/// Tolerance for probability rows summing to one.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Default truncation length for infinite-horizon rollouts. With the default
/// discount 0.9 the neglected tail weight is 0.9^200 < 1e-9.
pub const DEFAULT_MAX_LENGTH: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Infinite,
    Finite(usize),
}

/// A finite MDP with kernel `P[s][a][s']` stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// `transition[s][a]` is the next-state distribution.
    transition: Vec<Vec<Vec<f64>>>,
    initial_dist: Vec<f64>,
    gamma: f64,
    horizon: Horizon,
}

/// One violated MDP invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum MdpViolation {
    EmptySpace,
    TransitionShape { state: usize, action: Option<usize> },
    TransitionRow { state: usize, action: usize, sum: f64 },
    NegativeProbability { state: usize, action: usize },
    InitialDistShape,
    InitialDist { sum: f64 },
    Discount { gamma: f64 },
}

impl std::fmt::Display for MdpViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MdpViolation::EmptySpace => write!(f, "state or action space is empty"),
            MdpViolation::TransitionShape { state, action } => {
                write!(f, "transition table has wrong shape at state {state}, action {action:?}")
            }
            MdpViolation::TransitionRow { state, action, sum } => {
                write!(f, "transition row (s={state}, a={action}) sums to {sum}")
            }
            MdpViolation::NegativeProbability { state, action } => {
                write!(f, "transition row (s={state}, a={action}) has an entry outside [0,1]")
            }
            MdpViolation::InitialDistShape => write!(f, "initial_dist has wrong length"),
            MdpViolation::InitialDist { sum } => write!(f, "initial_dist sums to {sum}"),
            MdpViolation::Discount { gamma } => write!(f, "gamma = {gamma} is outside [0, 1)"),
        }
    }
}

impl TabularMdp {
    /// Builds and validates an MDP.
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        initial_dist: Vec<f64>,
        gamma: f64,
        horizon: Horizon,
    ) -> Result<Self> {
        let mdp = Self::from_parts_unchecked(transition, initial_dist, gamma, horizon);
        let report = mdp.validate();
        if report.is_empty() {
            Ok(mdp)
        } else {
            let msg: Vec<String> = report.iter().map(|v| v.to_string()).collect();
            Err(AihfError::InvalidMdp(msg.join("; ")))
        }
    }

    /// Builds an MDP without validation; use [`TabularMdp::validate`] to
    /// inspect it.
    pub fn from_parts_unchecked(
        transition: Vec<Vec<Vec<f64>>>,
        initial_dist: Vec<f64>,
        gamma: f64,
        horizon: Horizon,
    ) -> Self {
        let n_states = transition.len();
        let n_actions = transition.first().map_or(0, |r| r.len());
        TabularMdp { n_states, n_actions, transition, initial_dist, gamma, horizon }
    }

    /// Returns every violated invariant; empty means valid.
    pub fn validate(&self) -> Vec<MdpViolation> {
        let mut out = Vec::new();
        if self.n_states == 0 || self.n_actions == 0 {
            out.push(MdpViolation::EmptySpace);
        }
        if self.transition.len() != self.n_states {
            out.push(MdpViolation::TransitionShape { state: self.transition.len(), action: None });
        }
        for (s, rows) in self.transition.iter().enumerate() {
            if rows.len() != self.n_actions {
                out.push(MdpViolation::TransitionShape { state: s, action: None });
                continue;
            }
            for (a, row) in rows.iter().enumerate() {
                if row.len() != self.n_states {
                    out.push(MdpViolation::TransitionShape { state: s, action: Some(a) });
                    continue;
                }
                if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    out.push(MdpViolation::NegativeProbability { state: s, action: a });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL || !sum.is_finite() {
                    out.push(MdpViolation::TransitionRow { state: s, action: a, sum });
                }
            }
        }
        if self.initial_dist.len() != self.n_states {
            out.push(MdpViolation::InitialDistShape);
        } else {
            let sum: f64 = self.initial_dist.iter().sum();
            let bad_entry = self.initial_dist.iter().any(|&p| !(0.0..=1.0).contains(&p));
            if (sum - 1.0).abs() > ROW_SUM_TOL || bad_entry {
                out.push(MdpViolation::InitialDist { sum });
            }
        }
        if !(0.0..1.0).contains(&self.gamma) {
            out.push(MdpViolation::Discount { gamma: self.gamma });
        }
        out
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// Next-state distribution for `(s, a)`.
    pub fn next_dist(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[s][a]
    }

    pub fn transition(&self) -> &[Vec<Vec<f64>>] {
        &self.transition
    }

    /// Copy with a different discount.
    pub fn with_gamma(&self, gamma: f64) -> Self {
        let mut m = self.clone();
        m.gamma = gamma;
        m
    }

    /// Copy with a different initial distribution.
    pub fn with_initial_dist(&self, initial_dist: Vec<f64>) -> Self {
        let mut m = self.clone();
        m.initial_dist = initial_dist;
        m
    }

    /// Rollout length used for this MDP: `T` for finite horizons, otherwise
    /// the smallest `L` with `gamma^L < 1e-8`, capped below by one.
    pub fn default_rollout_length(&self) -> usize {
        match self.horizon {
            Horizon::Finite(t) => t.max(1),
            Horizon::Infinite => {
                if self.gamma <= 0.0 {
                    1
                } else {
                    ((1e-8f64).ln() / self.gamma.ln()).ceil().max(1.0) as usize
                }
            }
        }
    }

    pub(crate) fn check_state_action(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.n_states || a >= self.n_actions {
            return Err(AihfError::IndexOutOfRange(format!(
                "(s={s}, a={a}) for an MDP with {} states and {} actions",
                self.n_states, self.n_actions
            )));
        }
        Ok(())
    }

    /// State-to-state kernel under `policy`: `P_pi[s][s'] = sum_a pi(a|s) P[s][a][s']`.
    pub fn policy_kernel(&self, policy: &SoftPolicy) -> Vec<Vec<f64>> {
        let ns = self.n_states;
        let mut out = vec![vec![0.0; ns]; ns];
        for (s, row) in out.iter_mut().enumerate() {
            for a in 0..self.n_actions {
                let p = policy.prob(s, a);
                if p == 0.0 {
                    continue;
                }
                for (t, &q) in self.transition[s][a].iter().enumerate() {
                    row[t] += p * q;
                }
            }
        }
        out
    }

    /// Discounted state occupancy from `start`:
    /// `d(s) = sum_t gamma^t Pr(s_t = s)`; sums to `1/(1-gamma)`.
    pub fn state_occupancy_from(&self, policy: &SoftPolicy, start: &[f64]) -> Vec<f64> {
        let kernel = self.policy_kernel(policy);
        // (I - gamma P_pi^T) d = start
        linalg::solve_discounted_transpose(&kernel, self.gamma, start)
    }

    /// Discounted state-action occupancy `d(s,a) = d(s) pi(a|s)` from the
    /// initial distribution, flattened as `s * n_actions + a`.
    pub fn occupancy(&self, policy: &SoftPolicy) -> Vec<f64> {
        let ds = self.state_occupancy_from(policy, &self.initial_dist);
        let na = self.n_actions;
        let mut out = vec![0.0; self.n_states * na];
        for s in 0..self.n_states {
            for a in 0..na {
                out[s * na + a] = ds[s] * policy.prob(s, a);
            }
        }
        out
    }
}

/// Validation report for an MDP; empty means valid.
pub fn validate_mdp(mdp: &TabularMdp) -> Vec<MdpViolation> {
    mdp.validate()
}

/// An ordered list of `(state, action)` steps.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<(usize, usize)>,
}

impl Trajectory {
    pub fn new(steps: Vec<(usize, usize)>) -> Result<Self> {
        if steps.is_empty() {
            return Err(AihfError::Degenerate("trajectory must have at least one step".into()));
        }
        Ok(Trajectory { steps })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Checks every index against the MDP's spaces.
    pub fn validate_for(&self, mdp: &TabularMdp) -> Result<()> {
        if self.steps.is_empty() {
            return Err(AihfError::Degenerate("empty trajectory".into()));
        }
        for &(s, a) in &self.steps {
            mdp.check_state_action(s, a)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DemonstrationSet {
    pub trajectories: Vec<Trajectory>,
}

impl DemonstrationSet {
    pub fn new(trajectories: Vec<Trajectory>) -> Self {
        DemonstrationSet { trajectories }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// A labelled comparison: `winner` was preferred over `loser`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub winner: Trajectory,
    pub loser: Trajectory,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSet {
    pub pairs: Vec<PreferencePair>,
}

impl PreferenceSet {
    pub fn new(pairs: Vec<PreferencePair>) -> Self {
        PreferenceSet { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Samples a trajectory of `length` steps: `s0 ~ rho`, `a_t ~ pi(.|s_t)`,
/// `s_{t+1} ~ P(.|s_t, a_t)`.
pub fn sample_trajectory(
    mdp: &TabularMdp,
    policy: &SoftPolicy,
    length: usize,
    seed: Seed,
) -> Result<Trajectory> {
    if length == 0 {
        return Err(AihfError::Degenerate("trajectory length must be >= 1".into()));
    }
    policy.check_rows(mdp.n_states(), mdp.n_actions())?;
    let mut rng = seed.rng();
    let mut steps = Vec::with_capacity(length);
    let mut s = rng.categorical(mdp.initial_dist());
    for t in 0..length {
        let a = rng.categorical(policy.row(s));
        steps.push((s, a));
        if t + 1 < length {
            s = rng.categorical(mdp.next_dist(s, a));
        }
    }
    Ok(Trajectory { steps })
}

/// `sum_t gamma^t r(s_t, a_t)` for a flattened reward table indexed
/// `s * n_actions + a`.
pub fn discounted_return(trajectory: &Trajectory, reward_table: &[f64], n_actions: usize, gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut w = 1.0;
    for &(s, a) in &trajectory.steps {
        total += w * reward_table[s * n_actions + a];
        w *= gamma;
    }
    total
}

/// Empirical discounted state-action visitation of a demonstration set,
/// averaged over trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoOccupancy {
    pub n_states: usize,
    pub n_actions: usize,
    /// `d(s,a)` flattened as `s * n_actions + a`.
    pub values: Vec<f64>,
}

impl DemoOccupancy {
    pub fn from_demonstrations(demos: &DemonstrationSet, n_states: usize, n_actions: usize, gamma: f64) -> Result<Self> {
        if demos.is_empty() {
            return Err(AihfError::EmptyDataset("demonstrations"));
        }
        let mut values = vec![0.0; n_states * n_actions];
        for traj in &demos.trajectories {
            let mut w = 1.0;
            for &(s, a) in &traj.steps {
                if s >= n_states || a >= n_actions {
                    return Err(AihfError::IndexOutOfRange(format!("demo step (s={s}, a={a})")));
                }
                values[s * n_actions + a] += w;
                w *= gamma;
            }
        }
        let n = demos.len() as f64;
        values.iter_mut().for_each(|v| *v /= n);
        Ok(DemoOccupancy { n_states, n_actions, values })
    }

    /// Exact occupancy of an expert policy, as if infinitely many infinite
    /// trajectories were observed.
    pub fn from_policy(mdp: &TabularMdp, expert: &SoftPolicy) -> Self {
        DemoOccupancy { n_states: mdp.n_states(), n_actions: mdp.n_actions(), values: mdp.occupancy(expert) }
    }

    pub fn state_marginal(&self) -> Vec<f64> {
        self.values.chunks(self.n_actions).map(|row| row.iter().sum()).collect()
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }
}

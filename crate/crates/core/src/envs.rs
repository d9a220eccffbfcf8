//! Reference environments with canonical true rewards.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AihfError, Result};
use crate::mdp::{Horizon, TabularMdp};
use crate::reward::{FeatureMap, RewardParams};
use crate::soft_rl::SoftPolicy;

const GRIDWORLD_5X5: &str = include_str!("../assets/gridworld5x5.json");
const CHAIN_3: &str = include_str!("../assets/chain3.json");

/// Environment file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    /// Square grid, actions up/down/left/right. The intended move happens with
    /// probability `1 - slip`; otherwise one of the other three directions is
    /// taken uniformly. Moves into a wall stay put and the goal is absorbing.
    Gridworld {
        size: usize,
        slip: f64,
        gamma: f64,
        goal: (usize, usize),
        #[serde(default)]
        hazards: Vec<(usize, usize)>,
        beta: f64,
        theta_star: Vec<f64>,
    },
    /// `n` states in a line, actions left/right, slipping to the opposite move.
    Chain { n: usize, slip: f64, gamma: f64, beta: f64, theta_star: Vec<f64> },
    Explicit { mdp: TabularMdp, beta: f64, theta_star: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct Environment {
    pub name: String,
    pub mdp: TabularMdp,
    pub fmap: FeatureMap,
    pub theta_star: RewardParams,
    pub pi0: SoftPolicy,
    pub beta: f64,
}

pub fn gridworld(size: usize, slip: f64, gamma: f64, goal: (usize, usize)) -> Result<TabularMdp> {
    if size == 0 || goal.0 >= size || goal.1 >= size {
        return Err(AihfError::Config("goal must lie inside a non-empty grid".into()));
    }
    let n = size * size;
    let moves: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
    let target = |s: usize, m: usize| -> usize {
        let (r, c) = ((s / size) as isize, (s % size) as isize);
        let (nr, nc) = (r + moves[m].0, c + moves[m].1);
        if nr < 0 || nc < 0 || nr >= size as isize || nc >= size as isize {
            s
        } else {
            nr as usize * size + nc as usize
        }
    };
    let goal_s = goal.0 * size + goal.1;
    let transition = (0..n)
        .map(|s| {
            (0..4)
                .map(|a| {
                    let mut row = vec![0.0; n];
                    if s == goal_s {
                        row[s] = 1.0;
                        return row;
                    }
                    for m in 0..4 {
                        row[target(s, m)] += if m == a { 1.0 - slip } else { slip / 3.0 };
                    }
                    row
                })
                .collect()
        })
        .collect();
    let mut init = vec![0.0; n];
    init[0] = 1.0;
    TabularMdp::new(transition, init, gamma, Horizon::Infinite)
}

/// Goal cells earn +1 and hazard cells -1 for every action.
pub fn gridworld_theta(size: usize, goal: (usize, usize), hazards: &[(usize, usize)]) -> Vec<f64> {
    let mut theta = vec![0.0; size * size * 4];
    let mut set = |cell: (usize, usize), v: f64| {
        let s = cell.0 * size + cell.1;
        theta[s * 4..s * 4 + 4].iter_mut().for_each(|x| *x = v);
    };
    set(goal, 1.0);
    hazards.iter().for_each(|&h| set(h, -1.0));
    theta
}

pub fn chain(n: usize, slip: f64, gamma: f64) -> Result<TabularMdp> {
    if n < 2 {
        return Err(AihfError::Config("a chain needs at least two states".into()));
    }
    let step = |s: usize, right: bool| if right { (s + 1).min(n - 1) } else { s.saturating_sub(1) };
    let transition = (0..n)
        .map(|s| {
            (0..2)
                .map(|a| {
                    let mut row = vec![0.0; n];
                    row[step(s, a == 1)] += 1.0 - slip;
                    row[step(s, a != 1)] += slip;
                    row
                })
                .collect()
        })
        .collect();
    let mut init = vec![0.0; n];
    init[0] = 1.0;
    TabularMdp::new(transition, init, gamma, Horizon::Infinite)
}

impl EnvSpec {
    pub fn build(&self, name: &str) -> Result<Environment> {
        let (mdp, beta, theta) = match self {
            EnvSpec::Gridworld { size, slip, gamma, goal, beta, theta_star, .. } => {
                (gridworld(*size, *slip, *gamma, *goal)?, *beta, theta_star.clone())
            }
            EnvSpec::Chain { n, slip, gamma, beta, theta_star } => (chain(*n, *slip, *gamma)?, *beta, theta_star.clone()),
            EnvSpec::Explicit { mdp, beta, theta_star } => {
                let report = mdp.validate();
                if !report.is_empty() {
                    let msgs: Vec<String> = report.iter().map(|v| v.to_string()).collect();
                    return Err(AihfError::InvalidMdp(msgs.join("; ")));
                }
                (mdp.clone(), *beta, theta_star.clone())
            }
        };
        let fmap = FeatureMap::one_hot(mdp.n_states(), mdp.n_actions());
        if theta.len() != fmap.dim {
            return Err(AihfError::DimensionMismatch { expected: fmap.dim, got: theta.len() });
        }
        Ok(Environment {
            name: name.to_string(),
            pi0: SoftPolicy::uniform(mdp.n_states(), mdp.n_actions()),
            fmap,
            theta_star: RewardParams::new(theta)?,
            mdp,
            beta,
        })
    }
}

pub const REFERENCE_ENVS: [&str; 2] = ["gridworld5x5", "chain3"];

/// A shipped environment by name, or an environment file by path.
pub fn load_env(name_or_path: &str) -> Result<Environment> {
    let text = match name_or_path {
        "gridworld5x5" => GRIDWORLD_5X5.to_string(),
        "chain3" => CHAIN_3.to_string(),
        path => std::fs::read_to_string(Path::new(path))?,
    };
    let spec: EnvSpec = serde_json::from_str(&text)?;
    let name = Path::new(name_or_path).file_stem().and_then(|s| s.to_str()).unwrap_or(name_or_path);
    spec.build(name)
}

#![allow(dead_code)]

use aihf::mdp::{Horizon, TabularMdp};
use aihf::soft_rl::SoftPolicy;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn simplex(r: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| 0.05 + r.random::<f64>()).collect();
    let t: f64 = w.iter().sum();
    w.into_iter().map(|x| x / t).collect()
}

pub fn random_mdp(r: &mut ChaCha20Rng, ns: usize, na: usize, gamma: f64) -> TabularMdp {
    let p = (0..ns).map(|_| (0..na).map(|_| simplex(r, ns)).collect()).collect();
    TabularMdp::new(p, simplex(r, ns), gamma, Horizon::Infinite).unwrap()
}

pub fn random_policy(r: &mut ChaCha20Rng, ns: usize, na: usize) -> SoftPolicy {
    SoftPolicy::from_rows((0..ns).map(|_| simplex(r, na)).collect()).unwrap()
}

pub fn uniform_vec(r: &mut ChaCha20Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| lo + (hi - lo) * r.random::<f64>()).collect()
}

/// Central differences of `f` at `x`.
pub fn fd(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let n = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    d / n.max(1e-8)
}

/// Dense state kernel `P_pi[s][s']`.
fn kernel(mdp: &TabularMdp, pi: &SoftPolicy) -> DMatrix<f64> {
    let ns = mdp.n_states();
    DMatrix::from_fn(ns, ns, |s, t| (0..mdp.n_actions()).map(|a| pi.prob(s, a) * mdp.next_dist(s, a)[t]).sum())
}

/// `V = (I - gamma P_pi)^{-1} (r_pi - beta KL(pi || pi0))`, via nalgebra LU.
pub fn regularized_value(mdp: &TabularMdp, reward: &[f64], pi: &SoftPolicy, pi0: &SoftPolicy, beta: f64) -> Vec<f64> {
    let ns = mdp.n_states();
    let na = mdp.n_actions();
    let b = DVector::from_fn(ns, |s, _| {
        (0..na)
            .map(|a| {
                let p = pi.prob(s, a);
                if p > 0.0 { p * (reward[s * na + a] - beta * (p / pi0.prob(s, a)).ln()) } else { 0.0 }
            })
            .sum()
    });
    let m = DMatrix::identity(ns, ns) - kernel(mdp, pi) * mdp.gamma();
    m.lu().solve(&b).unwrap().iter().copied().collect()
}

pub fn start_value(mdp: &TabularMdp, v: &[f64]) -> f64 {
    mdp.initial_dist().iter().zip(v).map(|(p, x)| p * x).sum()
}

/// Discounted `(s,a)` occupancy from the initial distribution, by
/// `d^T = rho^T (I - gamma P_pi)^{-1}`.
pub fn occupancy(mdp: &TabularMdp, pi: &SoftPolicy) -> Vec<f64> {
    let ns = mdp.n_states();
    let na = mdp.n_actions();
    let m = (DMatrix::identity(ns, ns) - kernel(mdp, pi) * mdp.gamma()).transpose();
    let rho = DVector::from_column_slice(mdp.initial_dist());
    let d = m.lu().solve(&rho).unwrap();
    (0..ns * na).map(|i| d[i / na] * pi.prob(i / na, i % na)).collect()
}

/// Soft-optimal policy by plain value iteration to machine precision.
pub fn soft_optimal(mdp: &TabularMdp, reward: &[f64], pi0: &SoftPolicy, beta: f64) -> SoftPolicy {
    let ns = mdp.n_states();
    let na = mdp.n_actions();
    let mut v = vec![0.0; ns];
    let q_of = |v: &[f64]| -> Vec<Vec<f64>> {
        (0..ns)
            .map(|s| (0..na).map(|a| reward[s * na + a] + mdp.gamma() * mdp.next_dist(s, a).iter().zip(v).map(|(p, x)| p * x).sum::<f64>()).collect())
            .collect()
    };
    for _ in 0..5000 {
        let q = q_of(&v);
        v = (0..ns)
            .map(|s| {
                let m = q[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                m + beta * (0..na).map(|a| pi0.prob(s, a) * ((q[s][a] - m) / beta).exp()).sum::<f64>().ln()
            })
            .collect();
    }
    let q = q_of(&v);
    SoftPolicy::from_rows(
        (0..ns)
            .map(|s| {
                let m = q[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = (0..na).map(|a| pi0.prob(s, a) * ((q[s][a] - m) / beta).exp()).collect();
                let t: f64 = w.iter().sum();
                w.into_iter().map(|x| x / t).collect()
            })
            .collect(),
    )
    .unwrap()
}

/// Maximizer of `f` over the probability simplex (`n <= 3`): a regular grid,
/// then pairwise mass transfers with a shrinking step.
pub fn grid_oracle(n: usize, m: usize, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut best = vec![1.0 / n as f64; n];
    let mut fb = f(&best);
    let try_point = |p: Vec<f64>, best: &mut Vec<f64>, fb: &mut f64| {
        let v = f(&p);
        if v > *fb {
            *fb = v;
            *best = p;
        }
    };
    if n == 2 {
        for i in 1..m {
            try_point(vec![i as f64 / m as f64, 1.0 - i as f64 / m as f64], &mut best, &mut fb);
        }
    } else {
        for i in 1..m {
            for j in 1..m - i {
                try_point(vec![i as f64 / m as f64, j as f64 / m as f64, (m - i - j) as f64 / m as f64], &mut best, &mut fb);
            }
        }
    }
    let mut step = 1.0 / m as f64;
    while step > 1e-14 {
        let mut improved = false;
        for i in 0..n {
            for j in 0..n {
                if i == j || best[j] <= step {
                    continue;
                }
                let mut p = best.clone();
                p[i] += step;
                p[j] -= step;
                let v = f(&p);
                if v > fb {
                    fb = v;
                    best = p;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best
}

pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 { -(-x).exp().ln_1p() } else { x - x.exp().ln_1p() }
}

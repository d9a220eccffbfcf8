mod common;

use aihf::losses::{
    l1_gradient_chain_rule, l1_gradient_exact, l1_loss, l1_loss_via_values, l2_gradient, l2_loss, stochastic_gradient_gk,
    total_gradient, total_loss, LossConfig, TemperatureScale,
};
use aihf::mdp::{sample_trajectory, DemoOccupancy, DemonstrationSet, PreferencePair, PreferenceSet, Trajectory};
use aihf::reward::{reward_table, trajectory_reward, trajectory_reward_gradient, FeatureMap, RewardParams};
use aihf::rng::Seed;
use aihf::soft_rl::{solve_soft_optimal, SoftPolicy};
use common::*;
use rayon::prelude::*;

struct Instance {
    mdp: aihf::mdp::TabularMdp,
    fmap: FeatureMap,
    theta: Vec<f64>,
    pi0: SoftPolicy,
    expert: SoftPolicy,
}

fn instance(seed: u64, dim: usize) -> Instance {
    let mut r = rng(seed);
    let mdp = random_mdp(&mut r, 3, 3, 0.8);
    let fmap = FeatureMap::new(3, 3, (0..9).map(|_| uniform_vec(&mut r, dim, -1.0, 1.0)).collect()).unwrap();
    Instance { theta: uniform_vec(&mut r, dim, -1.0, 1.0), pi0: random_policy(&mut r, 3, 3), expert: random_policy(&mut r, 3, 3), mdp, fmap }
}

fn prefs_for(inst: &Instance, n: usize, len: usize, seed: u64) -> PreferenceSet {
    PreferenceSet::new(
        (0..n as u64)
            .map(|k| PreferencePair {
                winner: sample_trajectory(&inst.mdp, &inst.expert, len, Seed(seed).split(2 * k)).unwrap(),
                loser: sample_trajectory(&inst.mdp, &inst.pi0, len, Seed(seed).split(2 * k + 1)).unwrap(),
            })
            .collect(),
    )
}

#[test]
fn trajectory_reward_gradient_matches_finite_differences() {
    for i in 0..100 {
        let inst = instance(i, 4);
        let t = sample_trajectory(&inst.mdp, &inst.expert, 1 + (i as usize % 9), Seed(i)).unwrap();
        let g = trajectory_reward_gradient(&RewardParams::new(inst.theta.clone()).unwrap(), &inst.fmap, &t, 0.8).unwrap();
        let f = fd(&inst.theta, 1e-5, |v| trajectory_reward(&RewardParams::new(v.to_vec()).unwrap(), &inst.fmap, &t, 0.8).unwrap());
        assert!(rel_err(&g, &f) < 1e-6, "instance {i}: {}", rel_err(&g, &f));
    }
}

#[test]
fn l2_gradient_matches_finite_differences_and_ascends() {
    for i in 0..40 {
        let inst = instance(100 + i, 5);
        let prefs = prefs_for(&inst, 10, 6, i);
        for beta in [0.5, 1.0, 2.0] {
            let cfg = LossConfig { beta, ..LossConfig::default() };
            let th = RewardParams::new(inst.theta.clone()).unwrap();
            let g = l2_gradient(&th, &inst.fmap, &prefs, 0.8, &cfg).unwrap();
            let f = |v: &[f64]| l2_loss(&RewardParams::new(v.to_vec()).unwrap(), &inst.fmap, &prefs, 0.8, &cfg).unwrap();
            assert!(rel_err(&g, &fd(&inst.theta, 1e-5, f)) < 1e-5);
            if i < 20 {
                let step: Vec<f64> = inst.theta.iter().zip(&g).map(|(t, d)| t + 1e-4 * d).collect();
                assert!(f(&step) > f(&inst.theta));
            }
        }
    }
}

#[test]
fn l1_gradient_matches_finite_differences() {
    (0..50u64).into_par_iter().for_each(|i| {
        let inst = instance(200 + i, 4);
        let beta = [0.5, 1.0, 2.0][i as usize % 3];
        let demos = DemoOccupancy::from_policy(&inst.mdp, &inst.expert);
        let cfg = LossConfig { beta, ..LossConfig::default() };
        let th = RewardParams::new(inst.theta.clone()).unwrap();
        let f = fd(&inst.theta, 1e-5, |v| l1_loss(&inst.mdp, &RewardParams::new(v.to_vec()).unwrap(), &inst.fmap, &demos, &inst.pi0, beta, 1e-13).unwrap());
        let exact = l1_gradient_exact(&inst.mdp, &th, &inst.fmap, &demos, &inst.pi0, &cfg, 1e-13).unwrap();
        let chain = l1_gradient_chain_rule(&inst.mdp, &th, &inst.fmap, &demos, &inst.pi0, beta, 1e-13).unwrap();
        assert!(rel_err(&exact, &f) < 1e-4, "exact {i}");
        assert!(rel_err(&chain, &f) < 1e-4, "chain {i}");
    });
}

#[test]
fn chain_rule_gradient_handles_empirical_occupancy() {
    // Empirical counts are not flow-consistent; only the chain-rule form is
    // the true gradient then.
    let inst = instance(300, 3);
    let demos = DemonstrationSet::new((0..7).map(|k| sample_trajectory(&inst.mdp, &inst.expert, 5, Seed(k)).unwrap()).collect());
    let occ = DemoOccupancy::from_demonstrations(&demos, 3, 3, 0.8).unwrap();
    let th = RewardParams::new(inst.theta.clone()).unwrap();
    let chain = l1_gradient_chain_rule(&inst.mdp, &th, &inst.fmap, &occ, &inst.pi0, 1.0, 1e-13).unwrap();
    let f = fd(&inst.theta, 1e-5, |v| l1_loss(&inst.mdp, &RewardParams::new(v.to_vec()).unwrap(), &inst.fmap, &occ, &inst.pi0, 1.0, 1e-13).unwrap());
    assert!(rel_err(&chain, &f) < 1e-4);
}

#[test]
fn one_hot_gradient_is_scaled_occupancy_difference() {
    let inst = instance(400, 1);
    let fmap = FeatureMap::one_hot(3, 3);
    let mut r = rng(401);
    let theta = uniform_vec(&mut r, 9, -1.0, 1.0);
    let demos = DemoOccupancy::from_policy(&inst.mdp, &inst.expert);
    for beta in [0.5, 2.0] {
        let cfg = LossConfig { beta, ..LossConfig::default() };
        let g = l1_gradient_exact(&inst.mdp, &RewardParams::new(theta.clone()).unwrap(), &fmap, &demos, &inst.pi0, &cfg, 1e-13).unwrap();
        let (pi, _) = solve_soft_optimal(&inst.mdp, &theta, &inst.pi0, beta, 1e-13).unwrap();
        let d_pi = occupancy(&inst.mdp, &pi);
        let d_e = occupancy(&inst.mdp, &inst.expert);
        for k in 0..9 {
            assert!((g[k] - (d_e[k] - d_pi[k]) / beta).abs() < 1e-8);
        }
    }
}

#[test]
fn gradient_vanishes_when_demos_come_from_the_learned_policy() {
    let inst = instance(500, 4);
    let table = reward_table(&RewardParams::new(inst.theta.clone()).unwrap(), &inst.fmap).unwrap();
    let (pi, _) = solve_soft_optimal(&inst.mdp, &table, &inst.pi0, 1.0, 1e-13).unwrap();
    let demos = DemoOccupancy::from_policy(&inst.mdp, &pi);
    let g = l1_gradient_exact(&inst.mdp, &RewardParams::new(inst.theta.clone()).unwrap(), &inst.fmap, &demos, &inst.pi0, &LossConfig::default(), 1e-13).unwrap();
    assert!(g.iter().map(|x| x.abs()).fold(0.0, f64::max) < 1e-9);
    // Moment-matched demos plus tied preferences: a stationary point.
    let t = sample_trajectory(&inst.mdp, &pi, 4, Seed(1)).unwrap();
    let prefs = PreferenceSet::new(vec![PreferencePair { winner: t.clone(), loser: t }]);
    let total = total_gradient(&inst.mdp, &RewardParams::new(inst.theta.clone()).unwrap(), &inst.fmap, Some(&demos), &prefs, &inst.pi0, &LossConfig::default(), 1e-13).unwrap();
    assert!(total.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-6);
}

#[test]
fn l1_two_paths_agree() {
    for i in 0..20 {
        let inst = instance(600 + i, 4);
        let th = RewardParams::new(inst.theta.clone()).unwrap();
        let demos = DemoOccupancy::from_policy(&inst.mdp, &inst.expert);
        let a = l1_loss(&inst.mdp, &th, &inst.fmap, &demos, &inst.pi0, 1.0, 1e-13).unwrap();
        let b = l1_loss_via_values(&inst.mdp, &th, &inst.fmap, &demos, &inst.pi0, 1.0, 1e-13).unwrap();
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn l1_limits() {
    let inst = instance(700, 1);
    let fmap = FeatureMap::one_hot(3, 3);
    // Uniform policy on single-step demos: log(1/3) per step.
    let demos = DemonstrationSet::new(vec![Trajectory::new(vec![(0, 1)]).unwrap(), Trajectory::new(vec![(2, 0)]).unwrap()]);
    let occ = DemoOccupancy::from_demonstrations(&demos, 3, 3, 0.8).unwrap();
    let uniform = SoftPolicy::uniform(3, 3);
    let l = l1_loss(&inst.mdp, &RewardParams::zeros(9), &fmap, &occ, &uniform, 1.0, 1e-12).unwrap();
    let total: f64 = (0..3).flat_map(|s| (0..3).map(move |a| (s, a))).map(|(s, a)| occ.get(s, a)).sum();
    assert!((l - total * (1.0f64 / 3.0).ln()).abs() < 1e-12);
    // Strong reward on the demo actions with small beta: loss approaches 0 from below.
    let mut theta = vec![0.0; 9];
    theta[1] = 1.0;
    theta[6] = 1.0;
    let l = l1_loss(&inst.mdp, &RewardParams::new(theta).unwrap(), &fmap, &occ, &uniform, 0.01, 1e-12).unwrap();
    assert!(l <= 0.0 && l > -1e-20, "{l}");
}

#[test]
fn total_loss_with_zero_weight_is_preference_loss() {
    let inst = instance(800, 4);
    let prefs = prefs_for(&inst, 6, 5, 3);
    let th = RewardParams::new(inst.theta.clone()).unwrap();
    let cfg = LossConfig { w1: 0.0, ..LossConfig::default() };
    let t = total_loss(&inst.mdp, &th, &inst.fmap, None, &prefs, &inst.pi0, &cfg, 1e-12).unwrap();
    assert_eq!(t, l2_loss(&th, &inst.fmap, &prefs, 0.8, &cfg).unwrap());
    let demos = DemoOccupancy::from_policy(&inst.mdp, &inst.expert);
    let cfg = LossConfig { w1: 0.7, ..LossConfig::default() };
    let t = total_loss(&inst.mdp, &th, &inst.fmap, Some(&demos), &prefs, &inst.pi0, &cfg, 1e-12).unwrap();
    let parts = 0.7 * l1_loss(&inst.mdp, &th, &inst.fmap, &demos, &inst.pi0, 1.0, 1e-12).unwrap() + l2_loss(&th, &inst.fmap, &prefs, 0.8, &cfg).unwrap();
    assert!((t - parts).abs() < 1e-12);
}

#[test]
fn stochastic_demo_term_is_unbiased() {
    // E[g1] over expert and agent rollouts equals the exact feature-matching direction.
    let inst = instance(900, 3);
    let cfg = LossConfig { beta: 0.5, l1_scale: TemperatureScale::InverseBeta, ..LossConfig::default() };
    let th = RewardParams::new(inst.theta.clone()).unwrap();
    let table = reward_table(&th, &inst.fmap).unwrap();
    let (pi, _) = solve_soft_optimal(&inst.mdp, &table, &inst.pi0, cfg.beta, 1e-13).unwrap();
    let demos = DemoOccupancy::from_policy(&inst.mdp, &inst.expert);
    let exact = l1_gradient_exact(&inst.mdp, &th, &inst.fmap, &demos, &inst.pi0, &cfg, 1e-13).unwrap();
    let n = 100_000u64;
    let len = 80; // 0.8^80 ~ 2e-8 truncation
    let samples: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let e = sample_trajectory(&inst.mdp, &inst.expert, len, Seed(k).split(0)).unwrap();
            let a = sample_trajectory(&inst.mdp, &pi, len, Seed(k).split(1)).unwrap();
            stochastic_gradient_gk(&th, &inst.fmap, Some((&e, &a)), None, 0.8, &cfg).unwrap().g1_part
        })
        .collect();
    let dim = exact.len();
    let mean: Vec<f64> = (0..dim).map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n as f64).collect();
    for j in 0..dim {
        let var = samples.iter().map(|s| (s[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean[j] - exact[j]).abs() <= 3.0 * se + 1e-6, "coord {j}: {} vs {} (se {se})", mean[j], exact[j]);
    }
    assert!(rel_err(&mean, &exact) < 0.02);
}

#[test]
fn stochastic_estimate_decomposes() {
    let inst = instance(950, 3);
    let t: Vec<Trajectory> = (0..4).map(|k| sample_trajectory(&inst.mdp, &inst.expert, 5, Seed(k)).unwrap()).collect();
    let cfg = LossConfig { w1: 0.3, ..LossConfig::default() };
    let th = RewardParams::new(inst.theta.clone()).unwrap();
    let est = stochastic_gradient_gk(&th, &inst.fmap, Some((&t[0], &t[1])), Some((&t[2], &t[3])), 0.8, &cfg).unwrap();
    for j in 0..3 {
        assert_eq!(est.g[j], 0.3 * est.g1_part[j] + est.g2_part[j]);
    }
    let same = stochastic_gradient_gk(&th, &inst.fmap, Some((&t[0], &t[0])), Some((&t[2], &t[2])), 0.8, &cfg).unwrap();
    assert!(same.g.iter().all(|&x| x == 0.0));
}

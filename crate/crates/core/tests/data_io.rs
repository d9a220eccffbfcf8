mod common;

use aihf::data_gen::{make_ground_truth, sample_demonstrations, sample_preferences, tier_lambdas};
use aihf::error::AihfError;
use aihf::io::{
    demonstrations_from_csv, demonstrations_to_csv, preferences_from_csv, preferences_to_csv, read_json, read_mdp, write_json,
};
use aihf::mdp::{discounted_return, DemonstrationSet, PreferencePair, PreferenceSet, TabularMdp, Trajectory};
use aihf::reward::{reward_table, FeatureMap, RewardParams};
use aihf::rng::Seed;
use aihf::soft_rl::SoftPolicy;
use common::*;
use proptest::prelude::*;

fn world(seed: u64) -> (TabularMdp, FeatureMap, RewardParams, SoftPolicy) {
    let mut r = rng(seed);
    let mdp = random_mdp(&mut r, 4, 3, 0.8);
    let theta = RewardParams::new(uniform_vec(&mut r, 12, -1.0, 1.0)).unwrap();
    (mdp, FeatureMap::one_hot(4, 3), theta, SoftPolicy::uniform(4, 3))
}

#[test]
fn sampled_occupancy_matches_the_exact_occupancy() {
    let (mdp, fmap, theta, pi0) = world(1);
    let gt = make_ground_truth(&mdp, &theta, &fmap, &pi0, 1.0, 3).unwrap();
    let n = 10_000;
    let demos = sample_demonstrations(&gt, &mdp, n, 80, Seed(4)).unwrap();
    let exact = occupancy(&mdp, &gt.expert_policy);
    let per_traj: Vec<Vec<f64>> = demos
        .trajectories
        .iter()
        .map(|t| {
            let mut v = vec![0.0; 12];
            let mut w = 1.0;
            for &(s, a) in &t.steps {
                v[s * 3 + a] += w;
                w *= 0.8;
            }
            v
        })
        .collect();
    for i in 0..12 {
        let mean = per_traj.iter().map(|v| v[i]).sum::<f64>() / n as f64;
        let var = per_traj.iter().map(|v| (v[i] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - exact[i]).abs() < 3.0 * se + 1e-6, "entry {i}: {mean} vs {}", exact[i]);
    }
}

#[test]
fn preference_labels_are_calibrated() {
    let (mdp, fmap, theta, pi0) = world(2);
    let gt = make_ground_truth(&mdp, &theta, &fmap, &pi0, 1.0, 3).unwrap();
    let prefs = sample_preferences(&gt, &mdp, 20_000, 6, (0, 2), 1.0, Seed(5)).unwrap();
    let table = reward_table(&theta, &fmap).unwrap();
    let mut bins = vec![(0.0, 0.0, 0usize); 5];
    for p in &prefs.pairs {
        let g = discounted_return(&p.winner, &table, 3, 0.8) - discounted_return(&p.loser, &table, 3, 0.8);
        if g == 0.0 {
            continue;
        }
        let q = 1.0 / (1.0 + (-g.abs()).exp());
        let b = (((q - 0.5) * 10.0) as usize).min(4);
        bins[b].0 += q;
        bins[b].1 += if g > 0.0 { 1.0 } else { 0.0 };
        bins[b].2 += 1;
    }
    for (i, &(q, hits, n)) in bins.iter().enumerate() {
        if n < 100 {
            continue;
        }
        let (q, f) = (q / n as f64, hits / n as f64);
        let se = (q * (1.0 - q) / n as f64).sqrt();
        assert!((f - q).abs() < 3.0 * se, "bin {i}: observed {f} predicted {q} (n = {n})");
    }
}

#[test]
fn sharp_labels_follow_the_true_return() {
    let (mdp, fmap, theta, pi0) = world(3);
    let gt = make_ground_truth(&mdp, &theta, &fmap, &pi0, 1.0, 3).unwrap();
    let n = 20_000;
    let prefs = sample_preferences(&gt, &mdp, n, 6, (0, 2), 1e-4, Seed(6)).unwrap();
    let table = reward_table(&theta, &fmap).unwrap();
    let right = prefs
        .pairs
        .iter()
        .filter(|p| discounted_return(&p.winner, &table, 3, 0.8) >= discounted_return(&p.loser, &table, 3, 0.8))
        .count();
    assert!(right as f64 / n as f64 > 0.9999, "{right} of {n}");
}

#[test]
fn tiers_are_ordered_by_true_value() {
    for seed in 0..10 {
        let (mdp, fmap, theta, pi0) = world(10 + seed);
        let gt = make_ground_truth(&mdp, &theta, &fmap, &pi0, 1.0, 4).unwrap();
        assert!(gt.tier_values.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(gt.tier_policies.last().unwrap(), &gt.expert_policy);
        let table = reward_table(&theta, &fmap).unwrap();
        for (v, pi) in gt.tier_values.iter().zip(&gt.tier_policies) {
            let oracle = start_value(&mdp, &regularized_value(&mdp, &table, pi, &pi0, 1.0));
            assert!((v - oracle).abs() < 1e-8);
        }
    }
    assert_eq!(tier_lambdas(3), vec![0.25, 0.5, 1.0]);
}

#[test]
fn read_mdp_rejects_broken_kernels() {
    let dir = tempfile::tempdir().unwrap();
    let (mdp, ..) = world(4);
    let good = dir.path().join("good.json");
    write_json(&good, &mdp).unwrap();
    assert_eq!(read_mdp(&good).unwrap(), mdp);
    let mut value: serde_json::Value = read_json(&good).unwrap();
    value["transition"][1][2][0] = serde_json::json!(5.0);
    let bad = dir.path().join("bad.json");
    write_json(&bad, &value).unwrap();
    assert!(matches!(read_mdp(&bad), Err(AihfError::InvalidMdp(_))));
    value = read_json(&good).unwrap();
    value["gamma"] = serde_json::json!(1.5);
    write_json(&bad, &value).unwrap();
    assert!(matches!(read_mdp(&bad), Err(AihfError::InvalidMdp(_))));
}

fn trajectory() -> impl Strategy<Value = Trajectory> {
    prop::collection::vec((0usize..20, 0usize..5), 1..15).prop_map(|s| Trajectory::new(s).unwrap())
}

proptest! {
    #[test]
    fn demonstrations_round_trip_through_csv(ts in prop::collection::vec(trajectory(), 0..8)) {
        let demos = DemonstrationSet::new(ts);
        prop_assert_eq!(demonstrations_from_csv(&demonstrations_to_csv(&demos).unwrap()).unwrap(), demos);
    }

    #[test]
    fn preferences_round_trip_through_csv(ps in prop::collection::vec((trajectory(), trajectory()), 0..8)) {
        let prefs = PreferenceSet::new(ps.into_iter().map(|(winner, loser)| PreferencePair { winner, loser }).collect());
        prop_assert_eq!(preferences_from_csv(&preferences_to_csv(&prefs).unwrap()).unwrap(), prefs);
    }

    #[test]
    fn preferences_round_trip_through_json(ps in prop::collection::vec((trajectory(), trajectory()), 0..8)) {
        let prefs = PreferenceSet::new(ps.into_iter().map(|(winner, loser)| PreferencePair { winner, loser }).collect());
        let text = serde_json::to_string(&prefs).unwrap();
        prop_assert_eq!(serde_json::from_str::<PreferenceSet>(&text).unwrap(), prefs);
    }
}

//! Full-batch training on the 3-state chain for growing iteration budgets,
//! fitting log-log slopes of the two monitored averages.

use aihf::data_gen::{make_ground_truth, sample_demonstrations, sample_preferences};
use aihf::envs::load_env;
use aihf::harness::rate_study;
use aihf::rng::Seed;
use aihf::train::TrainingConfig;

fn main() -> aihf::error::Result<()> {
    let env = load_env("chain3")?;
    let gt = make_ground_truth(&env.mdp, &env.theta_star, &env.fmap, &env.pi0, env.beta, 3)?;
    let demos = sample_demonstrations(&gt, &env.mdp, 200, 60, Seed(1))?;
    let prefs = sample_preferences(&gt, &env.mdp, 200, 60, (0, 1), 1.0, Seed(2))?;
    let ks = [64, 256, 1024, 4096];
    let rs = rate_study(&env, &demos, &prefs, &TrainingConfig::default(), &ks)?;
    println!("{:>6} {:>14} {:>14}", "K", "mean |grad|^2", "mean gap");
    for i in 0..ks.len() {
        println!("{:>6} {:>14.4e} {:>14.4e}", ks[i], rs.mean_grad_norm_sq[i], rs.mean_policy_gap[i]);
    }
    let ((sg, rg), (sp, rp)) = rs.fits();
    println!("gradient slope {sg:.3} (r2 {rg:.3}), policy-gap slope {sp:.3} (r2 {rp:.3})");
    Ok(())
}

use aihf::data_gen::{make_ground_truth, sample_demonstrations, sample_preferences};
use aihf::envs::load_env;
use aihf::io::{demonstrations_from_csv, demonstrations_to_csv, preferences_to_csv};
use aihf::rng::Seed;

fn main() -> aihf::error::Result<()> {
    let env = load_env("gridworld5x5")?;
    let gt = make_ground_truth(&env.mdp, &env.theta_star, &env.fmap, &env.pi0, env.beta, 4)?;
    for (l, v) in gt.tier_lambdas.iter().zip(&gt.tier_values) {
        println!("tier lambda {l:.3}: value {v:.4}");
    }
    let demos = sample_demonstrations(&gt, &env.mdp, 5, 20, Seed(7).split(0))?;
    let prefs = sample_preferences(&gt, &env.mdp, 5, 20, (0, 2), 0.5, Seed(7).split(1))?;
    let csv = demonstrations_to_csv(&demos)?;
    assert_eq!(demonstrations_from_csv(&csv)?, demos);
    println!("{}", csv.lines().take(6).collect::<Vec<_>>().join("\n"));
    println!("...\n{}", preferences_to_csv(&prefs)?.lines().take(4).collect::<Vec<_>>().join("\n"));
    Ok(())
}

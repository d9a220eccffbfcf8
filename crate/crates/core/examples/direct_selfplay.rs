//! Reward-free static estimators next to the closed-form joint estimator on
//! a small sampled dataset.

use aihf::rng::Seed;
use aihf::static_choice::{
    aihf_estimator, direct_aihf_static, sample_static_datasets, selfplay_aihf_static, softmax_choice, ChoiceDistribution,
    StaticChoiceProblem,
};

fn main() -> aihf::error::Result<()> {
    let problem = StaticChoiceProblem::new(vec![0.0, 0.5, 1.0, 1.5], 1.0)?;
    let truth = softmax_choice(&problem);
    let counts = sample_static_datasets(&problem, 200, 30, None, Seed(4))?;
    let w1 = counts.total_demos() as f64 / counts.total_prefs() as f64;
    let pi0 = ChoiceDistribution::uniform(4);
    let rows = [
        ("closed form", aihf_estimator(&counts, 1.0)?.policy),
        ("direct", direct_aihf_static(&counts, &pi0, w1, 1.0)?),
        ("self-play", selfplay_aihf_static(&counts, &pi0, w1, 1.0)?),
    ];
    println!("truth       {:.3?}", truth.probs);
    for (name, pi) in &rows {
        println!("{name:<11} {:.3?}  tv {:.4}", pi.probs, pi.tv(&truth));
    }
    Ok(())
}

//! Two-action worked example: SFT, preference MLE, RLHF composition and the
//! joint estimator, plus the variance comparison across resamples.

use aihf::acceptance::variance_study;
use aihf::rng::Seed;
use aihf::static_choice::{aihf_estimator, preference_mle, rlhf_policy, sft_estimator, CountData};

fn main() -> aihf::error::Result<()> {
    // 50 demonstrations of each action, action 1 preferred 6 times out of 10.
    let counts = CountData::new(vec![50, 50], vec![vec![0, 6], vec![4, 0]])?;
    println!("sft        {:.6}", sft_estimator(&counts)?.probs[0]);
    println!("preference {:.6}", preference_mle(&counts, 1.0)?.policy.probs[0]);
    println!("rlhf       {:.6}", rlhf_policy(&counts, 1.0)?.probs[0]);
    let joint = aihf_estimator(&counts, 1.0)?;
    println!("aihf       {:.6}  (56/110 = {:.6}, {} iterations)", joint.policy.probs[0], 56.0 / 110.0, joint.iterations);

    let (aihf, sft, pref) = variance_study(Seed(1), 10_000)?;
    println!("\nvariance over 10^4 resamples (p = 0.5, |D| = 100, |P| = 10)");
    println!("aihf {aihf:.4e}  vs p(1-p)/110 = {:.4e}", 0.25 / 110.0);
    println!("sft  {sft:.4e}  pref {pref:.4e}");
    Ok(())
}

//! Joint training against the three-stage pipeline when one data source is
//! scarce. Values are the regularized objective under the true reward.

use aihf::acceptance::unbalanced_spec;
use aihf::harness::{run_experiment, Method, Metric};

fn main() -> aihf::error::Result<()> {
    let mut spec = unbalanced_spec();
    spec.repeats = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let report = run_experiment(&spec, rayon::current_num_threads())?;
    for &(nd, np) in &spec.dataset.ratios {
        let get = |m| report.mean(m, nd, np, Metric::TrueValue).unwrap_or(f64::NAN);
        println!("|D|:|P| = {nd}:{np}  aihf {:.3}  rlhf {:.3}", get(Method::Aihf), get(Method::Rlhf));
    }
    for c in report.cells.iter().filter(|c| c.error.is_some()) {
        println!("cell {} failed: {}", c.index, c.error.as_deref().unwrap_or(""));
    }
    Ok(())
}

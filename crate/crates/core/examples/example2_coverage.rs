//! Fifty actions, demonstrations only on the first 45: mean choice
//! probabilities per method, written as a tidy CSV.

use aihf::rng::Seed;
use aihf::static_choice::{run_example2, Example2Config};

fn main() -> aihf::error::Result<()> {
    let repeats = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let report = run_example2(Seed(0), repeats, &Example2Config::default())?;
    for (name, mass) in &report.max_uncovered_mass {
        println!("{name:<6} max mass on actions 46-50: {mass:.3e}");
    }
    println!("aihf min mass on an uncovered action: {:.3e}", report.min_aihf_uncovered_mass);
    println!("aihf closer to truth than rlhf in {}/{} repeats", report.aihf_wins, report.repeats);
    for m in &report.methods {
        let tv = m.tv_to_truth.iter().sum::<f64>() / m.tv_to_truth.len() as f64;
        println!("{:<6} mean tv to truth {tv:.4}", m.name);
    }
    let path = std::env::temp_dir().join("example2.csv");
    std::fs::write(&path, report.to_csv())?;
    println!("histogram data: {}", path.display());
    Ok(())
}

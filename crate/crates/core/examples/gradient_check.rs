use aihf::acceptance::gradient_study;
use aihf::rng::Seed;

fn main() -> aihf::error::Result<()> {
    let worst = gradient_study(Seed(3), 50)?;
    let names = ["demo log-likelihood", "preference loss", "direct static", "self-play static"];
    for (n, e) in names.iter().zip(worst) {
        println!("{n:<20} worst relative error vs central differences: {e:.2e}");
    }
    Ok(())
}

use aihf::envs::load_env;
use aihf::reward::reward_table;
use aihf::soft_rl::{l3_objective_table, solve_soft_optimal};

fn main() -> aihf::error::Result<()> {
    let env = load_env("gridworld5x5")?;
    let r = reward_table(&env.theta_star, &env.fmap)?;
    for beta in [0.1, 1.0, 10.0] {
        let (pi, sol) = solve_soft_optimal(&env.mdp, &r, &env.pi0, beta, 1e-10)?;
        let value = l3_objective_table(&env.mdp, &r, &pi, &env.pi0, beta, 1e-10)?;
        println!("beta {beta:>4}: {} sweeps, residual {:.1e}, value {value:.4}", sol.iterations, sol.residual);
        // Most likely move per cell, row 0 at the top.
        let arrows = ['^', 'v', '<', '>'];
        for row in 0..5 {
            let line: String = (0..5)
                .map(|col| {
                    let p = pi.row(row * 5 + col);
                    let a = (0..4).max_by(|&i, &j| p[i].total_cmp(&p[j])).unwrap();
                    arrows[a]
                })
                .collect();
            println!("  {line}");
        }
    }
    Ok(())
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use aihf::acceptance::{example1_values, render_table, run_acceptance_suite, CheckGroup, SuiteOptions};
use aihf::data_gen::{make_ground_truth, sample_demonstrations, sample_preferences};
use aihf::envs::load_env;
use aihf::error::AihfError;
use aihf::harness::{emit_plot_data, run_experiment, write_run, ExperimentSpec, PlotKind, RunReport};
use aihf::io::{demonstrations_from_csv, demonstrations_to_csv, preferences_from_csv, preferences_to_csv, read_json, write_json};
use aihf::mdp::PreferenceSet;
use aihf::rng::Seed;
use aihf::soft_rl::solve_soft_optimal;
use aihf::static_choice::{run_example2, Example2Config};
use aihf::train::{train_aihf, train_irl_only, train_rlhf, train_sft, TrainingConfig};

#[derive(Parser)]
#[command(name = "aihf", version, about = "Joint reward and policy learning from demonstrations and preferences")]
struct Cli {
    /// Master seed; for `sweep` it overrides the spec's seed. Defaults to 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// TOML or JSON config (training config for `train`, experiment spec for `sweep`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainMethod {
    Aihf,
    Rlhf,
    Sft,
    Irl,
}

#[derive(Clone, Copy, ValueEnum)]
enum Group {
    Static,
    Gradient,
    Soft,
    Train,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    LearningCurve,
    PolicyHistogram,
    RateFit,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample demonstrations and preferences from a shipped or file environment.
    GenData {
        #[arg(long, default_value = "gridworld5x5")]
        env: String,
        #[arg(long, default_value_t = 100)]
        n_demos: usize,
        #[arg(long, default_value_t = 100)]
        n_prefs: usize,
        #[arg(long)]
        length: Option<usize>,
        #[arg(long, default_value_t = 3)]
        tiers: usize,
        /// Compared tiers as `low,mid`.
        #[arg(long, default_value = "0,1", value_parser = parse_pair)]
        tier_pair: (usize, usize),
        #[arg(long, default_value_t = 1.0)]
        beta_pref: f64,
    },
    /// Soft value iteration under the environment's true reward.
    SolveMdp {
        #[arg(long, default_value = "gridworld5x5")]
        env: String,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Train one method on CSV datasets.
    Train {
        #[arg(long, value_enum)]
        method: TrainMethod,
        #[arg(long, default_value = "gridworld5x5")]
        env: String,
        #[arg(long)]
        demos: Option<PathBuf>,
        #[arg(long)]
        prefs: Option<PathBuf>,
    },
    /// The two-action worked example.
    Example1,
    /// The 50-action coverage study.
    Example2 {
        #[arg(long, default_value_t = 100)]
        repeats: usize,
    },
    /// Run an experiment spec (requires --config).
    Sweep,
    /// Run the acceptance checks.
    Accept {
        #[arg(long, value_enum)]
        only: Option<Group>,
    },
    /// Emit plot-ready CSV from a run report.
    Plotdata {
        #[arg(long, value_enum)]
        kind: Kind,
        /// `report.json` or the run directory that holds it.
        #[arg(long)]
        report: PathBuf,
    },
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected `a,b`")?;
    Ok((a.trim().parse().map_err(|e| format!("{e}"))?, b.trim().parse().map_err(|e| format!("{e}"))?))
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        Ok(serde_json::from_str(&text)?)
    } else {
        Ok(toml::from_str(&text)?)
    }
}

fn run(cli: Cli) -> Result<bool> {
    let seed = Seed(cli.seed.unwrap_or(0));
    let out = &cli.out;
    match cli.cmd {
        Cmd::GenData { env, n_demos, n_prefs, length, tiers, tier_pair, beta_pref } => {
            let env = load_env(&env)?;
            let gt = make_ground_truth(&env.mdp, &env.theta_star, &env.fmap, &env.pi0, env.beta, tiers)?;
            let length = length.unwrap_or_else(|| env.mdp.default_rollout_length());
            let demos = sample_demonstrations(&gt, &env.mdp, n_demos, length, seed.split(0))?;
            let prefs = sample_preferences(&gt, &env.mdp, n_prefs, length, tier_pair, beta_pref, seed.split(1))?;
            std::fs::create_dir_all(out)?;
            std::fs::write(out.join("demos.csv"), demonstrations_to_csv(&demos)?)?;
            std::fs::write(out.join("prefs.csv"), preferences_to_csv(&prefs)?)?;
            write_json(out.join("ground_truth.json"), &gt)?;
            println!("wrote {} demonstrations and {} preferences to {}", demos.len(), prefs.len(), out.display());
        }
        Cmd::SolveMdp { env, tol } => {
            let env = load_env(&env)?;
            let table = aihf::reward::reward_table(&env.theta_star, &env.fmap)?;
            let (policy, sol) = solve_soft_optimal(&env.mdp, &table, &env.pi0, env.beta, tol)?;
            write_json(out.join("policy.json"), &policy)?;
            write_json(out.join("values.json"), &sol.values)?;
            println!("converged {} after {} iterations, residual {:.3e}", sol.converged, sol.iterations, sol.residual);
        }
        Cmd::Train { method, env, demos, prefs } => {
            let env = load_env(&env)?;
            let mut cfg: TrainingConfig = match &cli.config {
                Some(p) => read_config(p)?,
                None => TrainingConfig::default(),
            };
            cfg.seed = seed;
            cfg.beta = env.beta;
            let demos = match demos {
                Some(p) => demonstrations_from_csv(&std::fs::read_to_string(p)?)?,
                None => Default::default(),
            };
            let prefs = match prefs {
                Some(p) => preferences_from_csv(&std::fs::read_to_string(p)?)?,
                None => PreferenceSet::default(),
            };
            std::fs::create_dir_all(out)?;
            match method {
                TrainMethod::Aihf | TrainMethod::Irl => {
                    let res = match method {
                        TrainMethod::Aihf => train_aihf(&env.mdp, &env.fmap, &demos, &prefs, &env.pi0, &cfg)?,
                        _ => train_irl_only(&env.mdp, &env.fmap, &demos, &env.pi0, &cfg)?,
                    };
                    write_json(out.join("theta.json"), &res.theta)?;
                    write_json(out.join("policy.json"), &res.policy)?;
                    std::fs::write(out.join("trace.csv"), res.trace.to_csv())?;
                }
                TrainMethod::Rlhf => {
                    let res = train_rlhf(&env.mdp, &env.fmap, &demos, &prefs, &env.pi0, &cfg)?;
                    if !res.rm.converged {
                        eprintln!("warning: reward model stopped at gradient norm {:.3e}", res.rm.grad_norm);
                    }
                    write_json(out.join("theta.json"), &res.theta)?;
                    write_json(out.join("policy.json"), &res.policy)?;
                    write_json(out.join("rm_report.json"), &res.rm)?;
                }
                TrainMethod::Sft => write_json(out.join("policy.json"), &train_sft(&env.mdp, &demos, &env.pi0)?)?,
            }
            println!("wrote results to {}", out.display());
        }
        Cmd::Example1 => {
            let v = example1_values()?;
            let names = ["sft", "preference", "rlhf", "aihf", "mirror_rlhf", "mirror_aihf"];
            let summary: serde_json::Map<String, serde_json::Value> = names.iter().zip(v).map(|(n, x)| (n.to_string(), x.into())).collect();
            for (n, x) in names.iter().zip(v) {
                println!("{n:<12} {x:.12}");
            }
            write_json(out.join("example1.json"), &summary)?;
        }
        Cmd::Example2 { repeats } => {
            let report = run_example2(seed, repeats, &Example2Config::default())?;
            std::fs::create_dir_all(out)?;
            std::fs::write(out.join("example2.csv"), report.to_csv())?;
            write_json(out.join("example2.json"), &report)?;
            println!("uncovered max mass {:?}", report.max_uncovered_mass);
            println!("aihf min uncovered mass {:.3e}, closer than rlhf in {}/{}", report.min_aihf_uncovered_mass, report.aihf_wins, report.repeats);
        }
        Cmd::Sweep => {
            let Some(path) = &cli.config else { bail!(AihfError::Config("sweep needs --config".into())) };
            let mut spec = ExperimentSpec::from_file(path)?;
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            let dir = spec.output_dir.clone().unwrap_or_else(|| out.clone());
            let report = run_experiment(&spec, cli.jobs.unwrap_or_else(rayon::current_num_threads))?;
            write_run(&dir, &spec, &report)?;
            print!("{}", report.summary_csv());
            let failed = report.cells.iter().filter(|c| c.error.is_some()).count();
            if failed > 0 {
                eprintln!("{failed} cells failed; see metrics.csv");
                return Ok(false);
            }
        }
        Cmd::Accept { only } => {
            let only = only.map(|g| match g {
                Group::Static => CheckGroup::Static,
                Group::Gradient => CheckGroup::Gradient,
                Group::Soft => CheckGroup::Soft,
                Group::Train => CheckGroup::Train,
            });
            let results = run_acceptance_suite(&SuiteOptions { only, ..SuiteOptions::default() });
            print!("{}", render_table(&results));
            return Ok(results.iter().all(|r| r.passed));
        }
        Cmd::Plotdata { kind, report } => {
            let path = if report.is_dir() { report.join("report.json") } else { report };
            let rep: RunReport = read_json(&path)?;
            let kind = match kind {
                Kind::LearningCurve => PlotKind::LearningCurve,
                Kind::PolicyHistogram => PlotKind::PolicyHistogram,
                Kind::RateFit => PlotKind::RateFit,
            };
            println!("{}", emit_plot_data(&rep, kind, out)?.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = matches!(e.downcast_ref::<AihfError>(), Some(AihfError::Config(_)));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}

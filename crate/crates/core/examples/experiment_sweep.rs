//! Config-driven run: parse a TOML spec, execute it, write the run
//! directory and the plot CSVs.

use aihf::harness::{emit_plot_data, run_experiment, write_run, ExperimentSpec, PlotKind};

const SPEC: &str = r#"
name = "chain-sweep"
environment = "chain3"
methods = ["aihf", "rlhf", "sft", "irl"]
repeats = 3
seed = 11
keep_traces = true
rate_ks = [32, 128, 512]

[dataset]
ratios = [[200, 20], [20, 200]]
length = 40

[training]
k = 100
gradient_mode = "full_batch"
record_exact = true
"#;

fn main() -> aihf::error::Result<()> {
    let spec: ExperimentSpec = toml::from_str(SPEC)?;
    let report = run_experiment(&spec, rayon::current_num_threads())?;
    let dir = std::env::temp_dir().join("aihf-sweep");
    write_run(&dir, &spec, &report)?;
    print!("{}", report.summary_csv());
    for kind in [PlotKind::LearningCurve, PlotKind::RateFit] {
        println!("{}", emit_plot_data(&report, kind, &dir)?.display());
    }
    Ok(())
}

use std::process::Command;

use aihf::acceptance::{run_acceptance_suite, CheckGroup, Example1Expected, SuiteOptions};
use aihf::harness::{plot_csv, run_experiment, write_run, ExperimentSpec, Manifest, Method, Metric, PlotKind, RunReport};
use aihf::io::read_json;
use aihf::train::TrainingConfig;

fn small_spec() -> ExperimentSpec {
    let mut spec = ExperimentSpec {
        name: "small".into(),
        environment: "chain3".into(),
        methods: vec![Method::Aihf, Method::Rlhf, Method::Sft],
        repeats: 2,
        seed: 5,
        ..ExperimentSpec::default()
    };
    spec.dataset.ratios = vec![(20, 20), (40, 5)];
    spec.dataset.length = Some(15);
    spec.training = TrainingConfig { k: 100, ..spec.training };
    spec
}

#[test]
fn sweeps_are_reproducible_byte_for_byte() {
    let spec = small_spec();
    let a = run_experiment(&spec, 1).unwrap();
    let b = run_experiment(&spec, 4).unwrap();
    assert_eq!(a.metrics_csv(), b.metrics_csv());
    assert_eq!(a.summary_csv(), b.summary_csv());
    assert_eq!(a.cells.len(), 2 * 2 * 3);
    assert!(a.cells.iter().all(|c| c.error.is_none()));
}

#[test]
fn run_directory_contents() {
    let mut spec = small_spec();
    spec.methods = vec![Method::Sft];
    spec.keep_traces = true;
    let report = run_experiment(&spec, 2).unwrap();
    let sft = report.mean(Method::Sft, 20, 20, Metric::TvToExpert).unwrap();
    assert!((0.0..=1.0).contains(&sft));
    assert!(report.mean(Method::Sft, 20, 20, Metric::RewardCorrelation).is_none());
    let dir = tempfile::tempdir().unwrap();
    write_run(dir.path(), &spec, &report).unwrap();
    for f in ["manifest.json", "report.json", "metrics.csv", "summary.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let manifest: Manifest = read_json(dir.path().join("manifest.json")).unwrap();
    assert_eq!(manifest.version, env!("CARGO_PKG_VERSION"));
    assert_eq!((manifest.seed, manifest.spec.clone()), (5, spec));
    let back: RunReport = read_json(dir.path().join("report.json")).unwrap();
    assert_eq!(back.metrics_csv(), report.metrics_csv());
}

#[test]
fn plot_tables() {
    let mut spec = small_spec();
    spec.methods = vec![Method::Aihf];
    spec.dataset.ratios = vec![(20, 20)];
    spec.repeats = 1;
    spec.keep_traces = true;
    let report = run_experiment(&spec, 1).unwrap();
    let curve = plot_csv(&report, PlotKind::LearningCurve).unwrap();
    assert_eq!(curve.lines().count(), 1 + 100);
    assert!(plot_csv(&report, PlotKind::PolicyHistogram).is_err());
    assert!(plot_csv(&report, PlotKind::RateFit).is_err());
    assert!("bar-chart".parse::<PlotKind>().is_err());

    spec.rate_ks = vec![20, 40, 80];
    spec.keep_traces = false;
    let report = run_experiment(&spec, 1).unwrap();
    let fit = plot_csv(&report, PlotKind::RateFit).unwrap();
    assert!(fit.starts_with("k,log_k,log_mean_grad_norm_sq,log_mean_policy_gap,slope_grad,r2_grad,slope_gap,r2_gap"));
    assert_eq!(fit.lines().count(), 4);
    assert!(plot_csv(&report, PlotKind::LearningCurve).is_err());

    let static_spec = ExperimentSpec {
        environment: "example2".into(),
        methods: vec![Method::StaticSft, Method::StaticRlhf, Method::StaticAihf],
        repeats: 2,
        ..small_spec()
    };
    let report = run_experiment(&static_spec, 2).unwrap();
    let hist = plot_csv(&report, PlotKind::PolicyHistogram).unwrap();
    assert_eq!(hist.lines().count(), 1 + 50 * 4);
}

#[test]
fn specs_reject_mismatched_methods() {
    let spec = ExperimentSpec { environment: "example2".into(), ..small_spec() };
    assert!(spec.validate().is_err());
    assert!(ExperimentSpec { repeats: 0, ..small_spec() }.validate().is_err());
}

#[test]
fn tampered_example_constant_fails_the_static_group() {
    let opts = SuiteOptions { only: Some(CheckGroup::Static), example1: Example1Expected { aihf: 0.51, ..Example1Expected::default() } };
    let results = run_acceptance_suite(&opts);
    assert!(results.iter().all(|r| r.group == CheckGroup::Static));
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.id.as_str()).collect();
    assert_eq!(failed, vec!["C1"]);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aihf"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli().arg("frobnicate").output().unwrap().status.code(), Some(2));
    assert_eq!(cli().args(["sweep", "--out"]).arg(dir.path()).output().unwrap().status.code(), Some(2));

    let out = cli().args(["example1", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = read_json(dir.path().join("example1.json")).unwrap();
    assert!((v["aihf"].as_f64().unwrap() - 56.0 / 110.0).abs() < 1e-12);

    let out = cli().args(["accept", "--only", "static"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn cli_sweep_writes_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("spec.toml");
    std::fs::write(
        &cfg,
        r#"
name = "cli"
environment = "chain3"
methods = ["aihf", "sft"]
keep_traces = true

[dataset]
ratios = [[10, 10]]
length = 10

[training]
k = 30
"#,
    )
    .unwrap();
    let run = dir.path().join("run");
    let out = cli().arg("sweep").arg("--config").arg(&cfg).arg("--out").arg(&run).args(["--seed", "3", "--jobs", "2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: Manifest = read_json(run.join("manifest.json")).unwrap();
    assert_eq!(manifest.seed, 3);
    let plots = dir.path().join("plots");
    let out = cli().args(["plotdata", "--kind", "learning-curve", "--report"]).arg(&run).arg("--out").arg(&plots).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(plots.join("learning-curve.csv").is_file());
}

#[test]
fn full_spec_parses_from_toml() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("unbalanced.toml");
    std::fs::write(
        &path,
        r#"
name = "unbalanced"
environment = "gridworld5x5"
methods = ["aihf", "rlhf", "sft"]
repeats = 10
seed = 3
keep_traces = true
rate_ks = []

[dataset]
ratios = [[1000, 10], [10, 1000]]
n_tiers = 3
tier_pair = [0, 1]
beta_pref = 1.0
length = 50

[training]
k = 300
gradient_mode = "full_batch"
alpha0 = 1.0
"#,
    )
    .unwrap();
    let spec = ExperimentSpec::from_file(&path).unwrap();
    spec.validate().unwrap();
    assert_eq!(spec.dataset.ratios, vec![(1000, 10), (10, 1000)]);
    assert_eq!(spec.training.gradient_mode, aihf::train::GradientMode::FullBatch);
    assert!(spec.normalize_step && spec.w1.is_none());
}

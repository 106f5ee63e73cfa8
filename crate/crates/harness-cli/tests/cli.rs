use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_voi-pathfollow"))
}

#[test]
fn init_emits_a_parseable_config() {
    let out = bin().arg("init").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(harness_cli::RunConfig::from_toml(&text).unwrap(), harness_cli::RunConfig::default());
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(bin().arg("frobnicate").status().unwrap().code(), Some(1));
    assert_eq!(bin().args(["run", "--config", "/nonexistent/run.cfg"]).status().unwrap().code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "seeds = []\n").unwrap();
    let status = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).status().unwrap();
    assert_eq!(status.code(), Some(1));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn missing_plot_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bin().args(["plot", "--in"]).arg(dir.path()).status().unwrap().code(), Some(2));
}

#[test]
fn run_report_and_plot_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let mut config = harness_cli::RunConfig {
        methods: vec![rl_driver::Method::EpsilonGreedy, rl_driver::Method::Softmax],
        seeds: vec![0, 1, 2],
        environment: mdp_env::EnvSpec::chain(5),
        ..Default::default()
    };
    config.agent.episodes = 30;
    std::fs::write(&cfg, config.to_toml()).unwrap();
    let out = dir.path().join("exp");
    assert!(bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap().success());
    let report = bin().args(["report", "--in"]).arg(&out).output().unwrap();
    assert!(report.status.success());
    assert!(String::from_utf8(report.stdout).unwrap().contains("epsilon_greedy"));
    assert!(bin().args(["plot", "--in"]).arg(&out).status().unwrap().success());
    assert!(out.join("learning_curves.svg").exists());
    assert!(bin().args(["plot", "--in"]).arg(&out).args(["--format", "csv"]).status().unwrap().success());
    assert!(out.join("learning_curves.csv").exists());
}

#[test]
fn trace_and_oracle_commands() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("mdp.json");
    std::fs::write(&spec, r#"{"kind":"random_mdp","n":4,"m":3}"#).unwrap();
    let out = dir.path().join("trace");
    let status = bin().args(["trace", "--mdp"]).arg(&spec).args(["--theta-max", "10", "--out"]).arg(&out).status().unwrap();
    assert!(status.success());
    assert!(out.join("path.csv").exists() && out.join("diagram.csv").exists());
    assert!(bin().args(["plot", "--in"]).arg(&out).status().unwrap().success());
    assert!(out.join("bifurcation.svg").exists());
    let oracle = bin().args(["oracle", "--mdp"]).arg(&spec).args(["--theta", "0.5,1,2"]).output().unwrap();
    assert!(oracle.status.success());
    let v: serde_json::Value = serde_json::from_slice(&oracle.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 3);
}

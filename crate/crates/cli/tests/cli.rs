use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_noisefree-bo"));
    c.env_remove("NOISEFREE_BO_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, policy: &str, horizon: usize) -> String {
    let text = format!(
        r#"{{"policy": "{policy}", "d": 1, "nu_emulator": 0.5, "nu_truth": 0.5,
  "B": {{"mode": "exact_norm"}}, "estimator": {{"kind": "known"}},
  "T": {horizon}, "seeds": [0, 1],
  "function": {{"kind": "rkhs", "n_centers": 4, "target_norm": 1.0, "seed": 9}}}}"#
    );
    let p = dir.join(format!("{policy}_{horizon}.json"));
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn single_round_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ucb", 1);
    let out = dir.path().join("out");
    let o = run(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("trace_seed0.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("# config_hash="));
    assert_eq!(
        lines[1],
        "t,x_0,f_x,inst_regret,cum_regret,sigma2_hat,lengthscale_hat,post_sd_at_x,jitter"
    );
    let agg: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("aggregate.json")).unwrap()).unwrap();
    assert_eq!(agg["seeds"].as_array().unwrap().len(), 2);
    assert!(out.join("config.json").exists());
}

#[test]
fn repeated_runs_give_identical_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ts", 25);
    let mut texts = Vec::new();
    for (k, threads) in ["1", "2"].iter().enumerate() {
        let out = dir.path().join(format!("out{k}"));
        let o = bin()
            .args(["run", "--config", &cfg, "--out", out.to_str().unwrap()])
            .env("NOISEFREE_BO_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        texts.push((
            fs::read(out.join("trace_seed0.csv")).unwrap(),
            fs::read(out.join("trace_seed1.csv")).unwrap(),
        ));
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn oracle_run_has_zero_regret() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "oracle", 6);
    let out = dir.path().join("out");
    let o = run(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let agg: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("aggregate.json")).unwrap()).unwrap();
    assert!(agg["regret_mean"].as_array().unwrap().iter().all(|v| v.as_f64() == Some(0.0)));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, r#"{"policy": "ucb", "d": 1}"#).unwrap();
    let o = run(&["run", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.json"), "{}", stderr(&o));

    let o = run(&["run", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_thread_count_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ucb", 2);
    let o = bin()
        .args(["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()])
        .env("NOISEFREE_BO_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("NOISEFREE_BO_THREADS"));
}

#[test]
fn plot_usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("p.svg");
    let o = run(&["plot", "--out", svg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let bad = dir.path().join("broken.csv");
    fs::write(
        &bad,
        "# config_hash=abc policy=ucb seed=0\n\
         t,x_0,f_x,inst_regret,cum_regret,sigma2_hat,lengthscale_hat,post_sd_at_x,jitter\n\
         1,0.1,0.5,0.1,0.1,1,1,0,1e-10\n\
         2,0.2,oops,0.1,0.2,1,1,0,1e-10\n",
    )
    .unwrap();
    let o = run(&["plot", bad.to_str().unwrap(), "--out", svg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("broken.csv") && e.contains("line 4"), "{e}");
    assert!(!svg.exists());
}

#[test]
fn plot_draws_one_polyline_per_policy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ucb", 16);
    let out = dir.path().join("out");
    assert!(run(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let svg = dir.path().join("plot.svg");
    let o = run(&[
        "plot",
        out.join("trace_seed0.csv").to_str().unwrap(),
        out.join("trace_seed1.csv").to_str().unwrap(),
        "--out",
        svg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<polyline").count(), 1);
    assert!(text.contains("ucb (2 traces)"));
}

#[test]
fn verify_with_small_suites() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("verify.json");
    fs::write(
        &cfg,
        r#"{
  "concentration": {"n_functions": 3, "probes": 300, "rounds": [5, 20]},
  "monotonicity": {"n_sequences": 2, "len": 20, "n_probes": 100},
  "distance_sum": {"n_random": 10, "n_greedy": 1, "max_len": 32, "greedy_pool": 256},
  "thompson_band": {"rounds": [10], "resamples": 500},
  "gaussian_tail": {"samples": 200000}
}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = run(&["verify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}\n{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    let text = fs::read_to_string(out.join("verify.txt")).unwrap();
    assert_eq!(text.matches("[PASS]").count(), 5, "{text}");

    fs::write(&cfg, r#"{"concentration": {"n_functions": "many"}}"#).unwrap();
    let o = run(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

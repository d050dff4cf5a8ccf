use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use propwake_cli::*;

fn propwake(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_propwake")).args(args).output().unwrap()
}

fn write_small_config(dir: &Path) -> String {
    let path = dir.join("run.toml");
    fs::write(
        &path,
        "repeats = 1\ncase = 1\n[train]\nepochs = 1\nbatch_size = 128\neval_every = 0\n[sweep]\nseq_lens = [48, 32]\nseeds = [0]\n",
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn gen_default_grid_writes_200_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gen");
    let o = propwake(&["-q", "--out", out.to_str().unwrap(), "gen"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_dir(out.join("corpus/traces")).unwrap().count(), 200);
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(out.join(MANIFEST)).unwrap()).unwrap();
    assert_eq!(manifest.command, "gen");
    assert!(manifest.versions.contains_key("propwake-core"));
    assert!(out.join(CONFIG_FILE).is_file());
}

#[test]
fn single_scenario_single_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("one.toml");
    fs::write(&cfg_path, "repeats = 1\n[grid]\noffsets_mm = [250.0]\nspeeds_mm_s = [400.0]\ndirections = [\"P\"]\n").unwrap();
    let out = dir.path().join("one");
    let o = propwake(&["-q", "--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap(), "gen"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_dir(out.join("corpus/traces")).unwrap().count(), 1);
    // the same grid cannot feed the classification heads
    let o = propwake(&["-q", "--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap(), "train"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_errors_exit_2_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[train]\nlr = -1.0\n").unwrap();
    for args in [
        vec!["--config", bad.to_str().unwrap(), "train"],
        vec!["--sl", "2", "train"],
        vec!["--case", "5", "train"],
        vec!["report"],
    ] {
        let o = propwake(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
        assert!(err.starts_with("error kind=config message="), "{err}");
    }
}

#[test]
fn runtime_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing.json");
    let o = propwake(&["-q", "--out", dir.path().to_str().unwrap(), "eval", "--checkpoint", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error kind=runtime"));
}

#[test]
fn train_eval_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small_config(dir.path());
    let run = dir.path().join("run");
    let o = propwake(&["-q", "--config", &cfg, "--out", run.to_str().unwrap(), "train"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics: RunMetrics = serde_json::from_str(&fs::read_to_string(run.join(METRICS_FILE)).unwrap()).unwrap();
    assert_eq!(metrics.confusion_speed.len(), 5);
    assert_eq!(metrics.confusion_dir.len(), 2);
    assert!((metrics.fitness - ((1.0 - metrics.acc_speed) + (1.0 - metrics.acc_dir) + metrics.rmse_x)).abs() < 1e-12);

    let ev = dir.path().join("eval");
    let ck = run.join(CHECKPOINT_FILE);
    let o = propwake(&["-q", "--config", &cfg, "--out", ev.to_str().unwrap(), "eval", "--checkpoint", ck.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let again: RunMetrics = serde_json::from_str(&fs::read_to_string(ev.join(EVAL_FILE)).unwrap()).unwrap();
    assert_eq!(again.rmse_x, metrics.rmse_x);
    assert_eq!(again.acc_speed, metrics.acc_speed);

    let rep = dir.path().join("report");
    let o = propwake(&["-q", "--out", rep.to_str().unwrap(), "report", run.to_str().unwrap(), ev.to_str().unwrap()]);
    assert!(o.status.success());
    let text = fs::read_to_string(rep.join("report.txt")).unwrap();
    assert!(text.contains("aggregate (mean ± std)"));
    assert!(text.contains("training loss"));
}

#[test]
fn epochs_zero_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig { out_dir: dir.path().to_path_buf(), repeats: 1, case: Some(2), ..RunConfig::default() };
    cfg.train.epochs = 0;
    let m = cmd_train(&cfg.resolve().unwrap()).unwrap();
    assert!(m.history.is_empty());
    assert!(dir.path().join(CHECKPOINT_FILE).is_file());
}

#[test]
fn sweep_rows_sorted_and_report_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_small_config(dir.path());
    let mut cfg = RunConfig::load(Path::new(&cfg_path)).unwrap();
    cfg.out_dir = dir.path().join("sweep");
    let s = cmd_sweep_seqlen(&cfg.clone().resolve().unwrap()).unwrap();
    assert_eq!(s.rows.iter().map(|r| r.sl).collect::<Vec<_>>(), vec![32, 48]);
    cfg.sweep.seq_lens = vec![32];
    cfg.out_dir = dir.path().join("single");
    assert_eq!(cmd_sweep_seqlen(&cfg.resolve().unwrap()).unwrap().rows.len(), 1);

    let r = propwake_cli::report::collect(&[dir.path().join("sweep")]).unwrap();
    assert_eq!(r.sweeps.len(), 1);
    assert!(propwake_cli::report::render(&r).contains("sl=48"));
}

#[test]
fn report_mean_std_matches_raw_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for seed in [1u64, 2] {
        let mut cfg = RunConfig { out_dir: dir.path().join(format!("s{seed}")), seed, repeats: 1, case: Some(1), ..RunConfig::default() };
        cfg.train.epochs = 1;
        cfg.train.eval_every = 0;
        cmd_train(&cfg.resolve().unwrap()).unwrap();
        dirs.push(dir.path().join(format!("s{seed}")));
    }
    let r = propwake_cli::report::collect(&dirs).unwrap();
    let vals: Vec<f64> = r.runs.iter().map(|e| e.metrics.fitness).collect();
    let mean = (vals[0] + vals[1]) / 2.0;
    let std = ((vals[0] - mean).powi(2) + (vals[1] - mean).powi(2)).sqrt();
    let agg = r.aggregate.unwrap();
    assert!((agg.fitness.mean - mean).abs() < 1e-15);
    assert!((agg.fitness.std - std).abs() < 1e-15);
}

#[test]
fn report_rejects_directory_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let err = propwake_cli::report::collect(&[dir.path().to_path_buf()]).unwrap_err();
    assert_eq!(exit_code(&err), 2);
}

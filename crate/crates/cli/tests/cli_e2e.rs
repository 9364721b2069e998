//! End-to-end runs of the `trmf` binary: pipelines, exit codes, and flag
//! handling.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn trmf(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trmf"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn synth_fit_forecast_backtest_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let out = trmf(
        &[
            "--seed", "5", "--out", "synth",
            "synth", "--t", "40", "--n", "6", "--d-true", "2", "--p-true", "2",
            "--noise-sigma", "0.05", "--mask-density", "1.0",
        ],
        root,
    );
    assert_success(&out);
    assert!(root.join("synth/data.csv").exists());
    assert!(root.join("synth/summary.json").exists());

    let out = trmf(
        &[
            "--seed", "5", "--out", "fit",
            "fit", "--input", "synth/data.csv", "--d", "2", "--p", "2",
            "--max-sweeps", "200",
        ],
        root,
    );
    assert_success(&out);
    assert!(root.join("fit/model.json").exists());

    let out = trmf(
        &[
            "--out", "fc",
            "forecast", "--model", "fit/model.json", "--horizon", "4",
        ],
        root,
    );
    assert_success(&out);
    let forecasts = fs::read_to_string(root.join("fc/forecasts.csv")).unwrap();
    // 6 series x 4 steps plus the header.
    assert_eq!(forecasts.lines().count(), 25);
    // Forecast periods continue the training axis.
    assert!(forecasts.lines().any(|l| l.contains(",40,")));
    assert!(forecasts.lines().any(|l| l.contains(",43,")));

    let out = trmf(
        &[
            "--seed", "5", "--out", "bt",
            "backtest", "--input", "synth/data.csv", "--horizon", "1", "--folds", "2",
            "--methods", "trmf,ar:2", "--d", "2", "--p", "2", "--max-sweeps", "100",
        ],
        root,
    );
    assert_success(&out);
    let scores = fs::read_to_string(root.join("bt/scores.csv")).unwrap();
    assert!(scores.lines().count() > 1);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("bt/summary.json")).unwrap()).unwrap();
    assert!(summary["minmax_median"]["methods"]
        .as_array()
        .unwrap()
        .iter()
        .any(|m| m == "trmf"));
}

#[test]
fn fit_rejects_p_not_below_t() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_success(&trmf(
        &["--out", "synth", "synth", "--t", "5", "--n", "3", "--d-true", "1", "--p-true", "1"],
        root,
    ));
    let out = trmf(
        &["--out", "fit", "fit", "--input", "synth/data.csv", "--d", "1", "--p", "5"],
        root,
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("p must satisfy 1 <= p < T"), "{stderr}");
}

#[test]
fn backtest_without_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = trmf(&["backtest", "--horizon", "1"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--input"), "{stderr}");
}

#[test]
fn unknown_subcommand_and_flag_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = trmf(&["explode"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    let out = trmf(&["synth", "--bogus-flag", "1"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "{stderr}");
}

#[test]
fn missing_input_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = trmf(
        &["fit", "--input", "no-such-file.csv", "--d", "1", "--p", "1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_drives_a_run_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_success(&trmf(
        &["--seed", "3", "--out", "synth", "synth", "--t", "30", "--n", "4",
          "--d-true", "2", "--p-true", "1"],
        root,
    ));
    fs::write(
        root.join("run.conf"),
        "input = synth/data.csv\nout = fitted\nd = 2\np = 1\nmax_sweeps = 50\nseed = 3\n",
    )
    .unwrap();
    let out = trmf(&["--config", "run.conf", "fit"], root);
    assert_success(&out);
    assert!(root.join("fitted/model.json").exists());

    fs::write(root.join("bad.conf"), "lambda_z = 1\n").unwrap();
    let out = trmf(&["--config", "bad.conf", "fit"], root);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown config key"));
}

#[test]
fn summary_echoes_hyperparameters() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_success(&trmf(
        &["--seed", "7", "--out", "synth", "synth", "--t", "30", "--n", "4",
          "--d-true", "2", "--p-true", "1"],
        root,
    ));
    assert_success(&trmf(
        &["--seed", "7", "--out", "fit", "fit", "--input", "synth/data.csv",
          "--d", "2", "--p", "1", "--lambda-f", "0.5", "--max-sweeps", "40"],
        root,
    ));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("fit/summary.json")).unwrap()).unwrap();
    let config = &summary["config"];
    assert_eq!(config["d"], 2);
    assert_eq!(config["lambda_f"], 0.5);
    assert_eq!(config["seed"], 7);
    assert_eq!(summary["objective_traces"].as_array().unwrap().len(), 1);
    // Fit reports never leak wall-clock times into reproducible outputs.
    assert!(summary["fit_reports"][0].get("wallclock").is_none());
}

#[test]
fn hierarchical_pipeline_with_reconciliation_modes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // Positive, coherent demand data: six leaves under two groups under a
    // root; every aggregate is the exact sum of its children.
    let t_len = 36usize;
    let mut leaves = vec![vec![0.0f64; t_len]; 6];
    for (i, leaf) in leaves.iter_mut().enumerate() {
        for (t, slot) in leaf.iter_mut().enumerate() {
            let phase = (t as f64 + i as f64) * 0.7;
            *slot = 10.0 + 2.0 * (i as f64 + 1.0) + 3.0 * phase.sin() + 0.05 * t as f64;
        }
    }
    let mut csv = String::from("series_id,period,value\n");
    for t in 0..t_len {
        let g0: f64 = (0..3).map(|i| leaves[i][t]).sum();
        let g1: f64 = (3..6).map(|i| leaves[i][t]).sum();
        csv.push_str(&format!("total,{t},{}\n", g0 + g1));
        csv.push_str(&format!("g1_0,{t},{g0}\n"));
        csv.push_str(&format!("g1_1,{t},{g1}\n"));
        for (i, leaf) in leaves.iter().enumerate() {
            csv.push_str(&format!("s{i},{t},{}\n", leaf[t]));
        }
    }
    fs::create_dir_all(root.join("synth")).unwrap();
    fs::write(root.join("synth/data.csv"), csv).unwrap();
    let mut hcsv = String::from("src_id,dst_id,weight\ntotal,g1_0,1\ntotal,g1_1,1\n");
    for i in 0..6 {
        let parent = if i < 3 { "g1_0" } else { "g1_1" };
        hcsv.push_str(&format!("{parent},s{i},1\n"));
    }
    fs::write(root.join("synth/hierarchy.csv"), hcsv).unwrap();

    assert_success(&trmf(
        &["--seed", "11", "--out", "fit", "fit", "--input", "synth/data.csv",
          "--hierarchy", "synth/hierarchy.csv", "--d", "2", "--p", "2",
          "--max-sweeps", "150"],
        root,
    ));

    for (mode, extra) in [
        ("bottom-up", vec![]),
        ("top-down", vec!["--input", "synth/data.csv"]),
        ("middle-out", vec!["--input", "synth/data.csv", "--level", "1"]),
    ] {
        let mut args = vec![
            "--out", mode, "forecast", "--model", "fit/model.json", "--horizon", "2",
            "--reconcile", mode, "--hierarchy", "synth/hierarchy.csv",
        ];
        args.extend(extra);
        let out = trmf(&args, root);
        assert_success(&out);
        let forecasts = fs::read_to_string(root.join(mode).join("forecasts.csv")).unwrap();
        // 9 nodes x 2 steps plus header.
        assert_eq!(forecasts.lines().count(), 19, "{mode}");
        assert!(forecasts.lines().any(|l| l.starts_with("total,")), "{mode}");
    }
}

#[test]
fn seasonal_emits_indices() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut csv = String::from("series_id,period,value\n");
    for t in 0..12u64 {
        let a = if t % 2 == 0 { 1.0 } else { 3.0 };
        let b = if t % 2 == 0 { 2.0 } else { 6.0 };
        csv.push_str(&format!("a,{t},{a}\nb,{t},{b}\n"));
    }
    fs::write(root.join("data.csv"), csv).unwrap();
    let out = trmf(
        &["--out", "season", "seasonal", "--input", "data.csv", "--season-length", "2"],
        root,
    );
    assert_success(&out);
    let seasonal = fs::read_to_string(root.join("season/seasonal.csv")).unwrap();
    assert!(seasonal.contains("isi,a,1,0.5"), "{seasonal}");
    assert!(seasonal.contains("wgsi,,2,1.5"), "{seasonal}");
    assert!(seasonal.contains("dgsi,,1,0.5"), "{seasonal}");
}

#[test]
fn gridsearch_emits_table_and_best_cell() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_success(&trmf(
        &["--seed", "2", "--out", "synth", "synth", "--t", "40", "--n", "5",
          "--d-true", "2", "--p-true", "1", "--noise-sigma", "0.05"],
        root,
    ));
    let out = trmf(
        &["--seed", "2", "--out", "grid", "gridsearch", "--input", "synth/data.csv",
          "--d-values", "1,2", "--p-values", "1,2", "--horizon", "1", "--folds", "1",
          "--max-sweeps", "60"],
        root,
    );
    assert_success(&out);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("grid/summary.json")).unwrap()).unwrap();
    let grid = &summary["grid"];
    assert_eq!(grid["scores"].as_array().unwrap().len(), 2);
    assert!(grid["best_d"].is_u64());
    assert!(root.join("grid/scores.csv").exists());
}

//! End-to-end checks of the command-line surface: file layouts, rerun
//! determinism, exit codes and report formats. Datasets are kept tiny by
//! shortening the integration horizon.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn grassgp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grassgp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tiny_dataset(dir: &Path, n: usize, seed: u64) -> Output {
    // 400 steps -> 20x20 snapshots.
    grassgp(&[
        "generate-ko",
        "--n-samples",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        dir.to_str().unwrap(),
        "--t-final",
        "1.2",
        "--dt",
        "0.003",
    ])
}

fn train_default(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--n-min-points",
        "8",
        "--threshold",
        "2.0",
        "--pass-fraction",
        "0.9",
        "--seed",
        "3",
    ];
    args.extend_from_slice(extra);
    grassgp(&args)
}

#[test]
fn generate_ko_writes_the_documented_layout() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    let out = grassgp(&[
        "generate-ko",
        "--n-samples",
        "4",
        "--seed",
        "7",
        "--out",
        d.to_str().unwrap(),
        "--t-final",
        "1.2",
        "--dt",
        "0.003",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("manifest.json").is_file());
    assert!(d.join("params.csv").is_file());
    for i in 0..4 {
        assert!(d.join(format!("snap_000{i}.csv")).is_file());
    }
    assert!(!d.join("snap_0004.csv").exists());
}

#[test]
fn generate_ko_is_byte_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(tiny_dataset(&a, 3, 9).status.success());
    assert!(tiny_dataset(&b, 3, 9).status.success());
    assert_eq!(
        fs::read(a.join("params.csv")).unwrap(),
        fs::read(b.join("params.csv")).unwrap()
    );
    assert_eq!(
        fs::read(a.join("snap_0002.csv")).unwrap(),
        fs::read(b.join("snap_0002.csv")).unwrap()
    );
}

#[test]
fn explicit_shape_is_recorded_and_honored() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    let out = grassgp(&[
        "generate-ko",
        "--n-samples",
        "2",
        "--seed",
        "1",
        "--out",
        d.to_str().unwrap(),
        "--t-final",
        "1.2",
        "--dt",
        "0.003",
        "--shape",
        "40x10",
    ]);
    assert!(out.status.success());
    let manifest = fs::read_to_string(d.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"shape\": [\n    40,\n    10\n  ]") || manifest.contains("40"));
    let snap = fs::read_to_string(d.join("snap_0000.csv")).unwrap();
    assert_eq!(snap.lines().count(), 40);
    assert_eq!(snap.lines().next().unwrap().split(',').count(), 10);

    let bad = grassgp(&[
        "generate-ko",
        "--n-samples",
        "1",
        "--seed",
        "1",
        "--out",
        dir.path().join("bad").to_str().unwrap(),
        "--t-final",
        "1.2",
        "--dt",
        "0.003",
        "--shape",
        "41x10",
    ]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn train_predict_evaluate_inspect_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(tiny_dataset(&data, 40, 5).status.success());

    let model = dir.path().join("model.bundle");
    let out = train_default(&data, &model, &[]);
    assert!(
        out.status.code() == Some(0) || out.status.code() == Some(2),
        "train failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(model.is_file());
    let diag = dir.path().join("model.bundle.diagnostics.csv");
    assert!(diag.is_file());
    let diag_text = fs::read_to_string(&diag).unwrap();
    assert!(diag_text.starts_with("cluster_id,size,epsilon_h,pass,sublabel_count"));

    // Predict at the training parameter points.
    let preds = dir.path().join("preds");
    let out = grassgp(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--params",
        data.join("params.csv").to_str().unwrap(),
        "--out",
        preds.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(preds.join("manifest.json").is_file());
    assert!(preds.join("snap_0000.csv").is_file());

    // Training points reproduce their snapshots closely.
    let truth = fs::read_to_string(data.join("snap_0000.csv")).unwrap();
    let got = fs::read_to_string(preds.join("snap_0000.csv")).unwrap();
    let parse = |text: &str| -> Vec<f64> {
        text.split(['\n', ','])
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.parse().unwrap())
            .collect()
    };
    let (t, g) = (parse(&truth), parse(&got));
    let norm: f64 = t.iter().map(|x| x * x).sum::<f64>().sqrt();
    let err: f64 = t
        .iter()
        .zip(&g)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    assert!(err / norm < 1e-2, "relative error {}", err / norm);

    // Evaluate on the training set.
    let report = dir.path().join("report.csv");
    let out = grassgp(&[
        "evaluate",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report_text = fs::read_to_string(&report).unwrap();
    let lines: Vec<&str> = report_text.lines().collect();
    assert_eq!(lines[0], "sample_id,frobenius_error");
    assert_eq!(lines.len(), 1 + 40 + 3);
    assert!(lines[41].starts_with("mean,"));

    // Inspect clusters.
    let clusters = dir.path().join("clusters.csv");
    let out = grassgp(&[
        "inspect-clusters",
        "--model",
        model.to_str().unwrap(),
        "--out",
        clusters.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let table = fs::read_to_string(&clusters).unwrap();
    assert!(table.starts_with("sample_id,xi_1,xi_2,cluster_id,sublabel,epsilon_h"));
    assert_eq!(table.lines().count(), 1 + 40);
}

#[test]
fn rerun_training_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(tiny_dataset(&data, 32, 11).status.success());
    let m1 = dir.path().join("a.bundle");
    let m2 = dir.path().join("b.bundle");
    assert!(train_default(&data, &m1, &[]).status.code().unwrap() <= 2);
    assert!(train_default(&data, &m2, &[]).status.code().unwrap() <= 2);
    assert_eq!(fs::read(&m1).unwrap(), fs::read(&m2).unwrap());
    assert_eq!(
        fs::read(dir.path().join("a.bundle.diagnostics.csv")).unwrap(),
        fs::read(dir.path().join("b.bundle.diagnostics.csv")).unwrap()
    );
}

#[test]
fn budget_exhaustion_exits_two_with_bundle_written() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(tiny_dataset(&data, 30, 2).status.success());
    let model = dir.path().join("model.bundle");
    // Impossible threshold with a single candidate forces exit 2.
    let out = grassgp(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--n-start",
        "2",
        "--n-max",
        "2",
        "--n-min-points",
        "5",
        "--threshold",
        "1e-12",
        "--pass-fraction",
        "1.0",
        "--seed",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(model.is_file());
}

#[test]
fn empty_params_file_predicts_nothing_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(tiny_dataset(&data, 30, 4).status.success());
    let model = dir.path().join("model.bundle");
    assert!(train_default(&data, &model, &[]).status.code().unwrap() <= 2);

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "sample_id,xi_1,xi_2\n").unwrap();
    let preds = dir.path().join("preds");
    let out = grassgp(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--params",
        empty.to_str().unwrap(),
        "--out",
        preds.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(preds.join("manifest.json").is_file());
    assert!(!preds.join("snap_0000.csv").exists());
}

#[test]
fn dimension_mismatch_names_the_offending_row() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(tiny_dataset(&data, 30, 6).status.success());
    let model = dir.path().join("model.bundle");
    assert!(train_default(&data, &model, &[]).status.code().unwrap() <= 2);

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "sample_id,xi_1,xi_2,xi_3\n0,0.1,0.2,0.3\n").unwrap();
    let out = grassgp(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--params",
        bad.to_str().unwrap(),
        "--out",
        dir.path().join("p").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 0"));
}

#[test]
fn corrupt_dataset_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(tiny_dataset(&data, 30, 8).status.success());
    fs::write(data.join("snap_0001.csv"), "1.0,2.0\nnot-a-number,4.0\n").unwrap();
    let out = grassgp(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        dir.path().join("m.bundle").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("snap_0001.csv"), "stderr: {err}");
}

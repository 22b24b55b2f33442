use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use corrdict::io::{read_labels, read_matrix};
use tempfile::TempDir;

fn corrdict(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corrdict"))
        .args(args)
        .env_remove("CORRDICT_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = corrdict(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

fn synth_tiny(dir: &Path) {
    ok(&["synth", "--preset", "tiny", "--noise", "0", "--out", s(dir)]);
}

#[test]
fn synth_writes_the_full_dataset() {
    let t = TempDir::new().unwrap();
    synth_tiny(t.path());
    let y = read_matrix(t.path().join("signals.cdmx")).unwrap();
    let d = read_matrix(t.path().join("true_dictionary.cdmx")).unwrap();
    let x = read_matrix(t.path().join("true_coefficients.cdmx")).unwrap();
    assert_eq!(y.dim(), (16, 8 * 8 * 4));
    assert_eq!(d.dim(), (16, 4));
    assert_eq!(x.dim(), (4, 8 * 8 * 4));
    let (_, _, labels) = read_labels(t.path().join("truth_labels.cdmx")).unwrap();
    assert_eq!(labels.len(), 256);
    for k in 0..4 {
        assert!(t.path().join(format!("maps/network_{k:02}.cdmx")).exists());
    }
    let manifest = fs::read_to_string(t.path().join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 1);
    assert!(manifest.contains("\"synth\""));
}

#[test]
fn train_history_has_one_row_per_iteration() {
    let t = TempDir::new().unwrap();
    synth_tiny(t.path());
    let data = t.path().join("signals.cdmx");
    let truth = t.path().join("true_dictionary.cdmx");
    let out = t.path().join("run");
    ok(&[
        "train",
        "--preset",
        "tiny",
        "--data",
        s(&data),
        "--truth",
        s(&truth),
        "--iters",
        "7",
        "--outer-tol",
        "0",
        "--out",
        s(&out),
    ]);
    let rows = csv_rows(&out.join("history.csv"));
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|r| !r[3].is_empty()));
    let d = read_matrix(out.join("dictionary.cdmx")).unwrap();
    for c in d.columns() {
        assert!((c.dot(&c) - 1.0).abs() < 1e-9);
    }
}

#[test]
fn en_dl_objective_column_is_nonincreasing() {
    let t = TempDir::new().unwrap();
    synth_tiny(t.path());
    let data = t.path().join("signals.cdmx");
    let out = t.path().join("en");
    ok(&[
        "train",
        "--preset",
        "tiny",
        "--alg",
        "en_dl",
        "--data",
        s(&data),
        "--iters",
        "8",
        "--out",
        s(&out),
    ]);
    let objs: Vec<f64> = csv_rows(&out.join("history.csv"))
        .iter()
        .map(|r| r[2].parse().unwrap())
        .collect();
    assert!(!objs.is_empty());
    for w in objs.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-9), "{objs:?}");
    }
}

#[test]
fn partial_full_fraction_matches_train() {
    let t = TempDir::new().unwrap();
    synth_tiny(t.path());
    let data = t.path().join("signals.cdmx");
    let truth = t.path().join("true_dictionary.cdmx");
    let p = t.path().join("partial");
    let tr = t.path().join("train");
    let common = [
        "--preset",
        "tiny",
        "--data",
        s(&data),
        "--truth",
        s(&truth),
        "--iters",
        "10",
    ];
    let mut args = vec!["partial", "--fractions", "0.25,0.5,1.0", "--out", s(&p)];
    args.extend(common);
    ok(&args);
    let mut args = vec!["train", "--out", s(&tr)];
    args.extend(common);
    ok(&args);

    let rows = csv_rows(&p.join("partial.csv"));
    assert_eq!(rows.len(), 3);
    let last = csv_rows(&tr.join("history.csv")).pop().unwrap();
    assert_eq!(rows[2][0].parse::<f64>().unwrap(), 1.0);
    assert_eq!(rows[2][1], last[3]);
    assert_eq!(rows[2][2], last[1]);
}

#[test]
fn segment_writes_requested_slices() {
    let t = TempDir::new().unwrap();
    synth_tiny(t.path());
    let coefs = t.path().join("true_coefficients.cdmx");
    let truth = t.path().join("truth_labels.cdmx");
    let out = t.path().join("seg");
    ok(&[
        "segment",
        "--preset",
        "tiny",
        "--coefs",
        s(&coefs),
        "--truth",
        s(&truth),
        "--slices",
        "0,3",
        "--out",
        s(&out),
    ]);
    assert!(out.join("slice_z00.pgm").exists());
    assert!(out.join("slice_z03.pgm").exists());
    assert!(!out.join("slice_z01.pgm").exists());
    let pgm = fs::read(out.join("slice_z00.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n8 8\n255\n"));
    let (_, _, labels) = read_labels(out.join("labels.cdmx")).unwrap();
    assert_eq!(labels.len(), 256);
    let scores = csv_rows(&out.join("scores.csv"));
    let purity: f64 = scores[0][0].parse().unwrap();
    assert!((0.0..=1.0).contains(&purity));
}

#[test]
fn eval_of_identical_dictionaries_is_zero() {
    let t = TempDir::new().unwrap();
    synth_tiny(t.path());
    let d = t.path().join("true_dictionary.cdmx");
    let out = t.path().join("eval");
    ok(&[
        "eval",
        "--learned",
        s(&d),
        "--truth",
        s(&d),
        "--out",
        s(&out),
    ]);
    let summary = csv_rows(&out.join("summary.csv"));
    assert_eq!(summary[0][0].parse::<f64>().unwrap(), 0.0);
    assert_eq!(summary[0][1].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let t = TempDir::new().unwrap();
    let cfg = t.path().join("run.conf");
    fs::write(
        &cfg,
        "# tiny run\npreset = tiny\ntimepoints = 12\nnetworks = 3\n",
    )
    .unwrap();
    let out = t.path().join("s");
    ok(&[
        "synth",
        "--config",
        s(&cfg),
        "--networks",
        "5",
        "--out",
        s(&out),
    ]);
    let d = read_matrix(out.join("true_dictionary.cdmx")).unwrap();
    assert_eq!(d.dim(), (12, 5));
}

#[test]
fn usage_errors_exit_with_2() {
    let t = TempDir::new().unwrap();
    assert_eq!(
        corrdict(&["synth", "--preset", "tiny"]).status.code(),
        Some(2)
    );
    let out = t.path().join("x");
    assert_eq!(
        corrdict(&["synth", "--grid", "8x8", "--out", s(&out)])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(corrdict(&["bogus"]).status.code(), Some(2));
    assert_eq!(corrdict(&["--help"]).status.code(), Some(0));
    let missing = t.path().join("nope.cdmx");
    assert_eq!(
        corrdict(&["train", "--data", s(&missing), "--out", s(&out)])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn non_finite_input_exits_with_3() {
    let t = TempDir::new().unwrap();
    let data = t.path().join("bad.csv");
    fs::write(&data, "1,2,3\n4,NaN,6\n7,8,9\n").unwrap();
    let out = t.path().join("o");
    let r = corrdict(&[
        "train",
        "--data",
        s(&data),
        "--atoms",
        "2",
        "--sparsity",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(
        r.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
}

#[test]
fn thread_count_does_not_change_results() {
    let t = TempDir::new().unwrap();
    synth_tiny(t.path());
    let data = t.path().join("signals.cdmx");
    let a = t.path().join("a");
    let b = t.path().join("b");
    ok(&[
        "train",
        "--preset",
        "tiny",
        "--data",
        s(&data),
        "--iters",
        "5",
        "--threads",
        "1",
        "--out",
        s(&a),
    ]);
    ok(&[
        "train",
        "--preset",
        "tiny",
        "--data",
        s(&data),
        "--iters",
        "5",
        "--threads",
        "4",
        "--out",
        s(&b),
    ]);
    assert_eq!(
        fs::read(a.join("dictionary.cdmx")).unwrap(),
        fs::read(b.join("dictionary.cdmx")).unwrap()
    );
}

#[test]
fn standardize_is_recorded_and_changes_the_fit() {
    let t = TempDir::new().unwrap();
    synth_tiny(t.path());
    let data = t.path().join("signals.cdmx");
    let (a, b) = (t.path().join("raw"), t.path().join("std"));
    let base = [
        "train",
        "--preset",
        "tiny",
        "--data",
        s(&data),
        "--iters",
        "3",
    ];
    let mut args = base.to_vec();
    args.extend(["--out", s(&a)]);
    ok(&args);
    args = base.to_vec();
    args.extend(["--standardize", "--out", s(&b)]);
    ok(&args);
    let manifest = fs::read_to_string(b.join("manifest.jsonl")).unwrap();
    assert!(manifest.contains("\"standardize\":\"true\""), "{manifest}");
    assert_ne!(
        fs::read(a.join("dictionary.cdmx")).unwrap(),
        fs::read(b.join("dictionary.cdmx")).unwrap()
    );
}

//! End-to-end tests of the binary: artifact formats, exit codes, and
//! reproducibility.

use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_freeprob");

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary should spawn")
}

fn write_bernoulli(dir: &Path) -> String {
    let path = dir.join("bernoulli.json");
    std::fs::write(
        &path,
        r#"{"label": "bernoulli", "atoms": [{"x": 0.0, "w": 0.5}, {"x": 2.0, "w": 0.5}]}"#,
    )
    .unwrap();
    path.display().to_string()
}

/// Data rows of a CSV, skipping `#` comments.
fn data_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn convolve_bernoulli_square() {
    let dir = tempfile::tempdir().unwrap();
    let measure = write_bernoulli(dir.path());
    let out = run(
        &["convolve", &measure, "--n", "2", "--order", "8", "--out", "conv.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let rows = data_rows(&dir.path().join("conv.csv"));
    assert_eq!(rows.len(), 8);
    let expect = [1.0, 3.0, 10.0];
    for (i, e) in expect.iter().enumerate() {
        assert_eq!(rows[i][0], (i + 1).to_string());
        let m: f64 = rows[i][1].parse().unwrap();
        assert!((m - e).abs() < 1e-9, "row {i}: {m}");
    }

    // header comment declares the schema
    let text = std::fs::read_to_string(dir.path().join("conv.csv")).unwrap();
    assert!(text.starts_with("# columns: k,m_k\n"));

    // manifest carries the input digest and output path
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("conv.csv.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["command"], "convolve");
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["outputs"][0], "conv.csv");
}

#[test]
fn convolve_delta1_is_all_ones() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("delta1.json");
    std::fs::write(&path, r#"{"label": "delta1", "atoms": [{"x": 1.0, "w": 1.0}]}"#).unwrap();
    let out = run(
        &["convolve", "delta1.json", "--n", "9", "--order", "12", "--out", "d.csv"],
        dir.path(),
    );
    assert!(out.status.success());
    for row in data_rows(&dir.path().join("d.csv")) {
        let m: f64 = row[1].parse().unwrap();
        assert!((m - 1.0).abs() < 1e-12);
    }
}

#[test]
fn convolve_zero_mean_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zm.json");
    std::fs::write(
        &path,
        r#"{"label": "zm", "atoms": [{"x": -1.0, "w": 0.5}, {"x": 1.0, "w": 0.5}]}"#,
    )
    .unwrap();
    let out = run(&["convolve", "zm.json", "--out", "zm.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("S-transform undefined: E(X) = 0"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn bounds_bernoulli_row_100() {
    let dir = tempfile::tempdir().unwrap();
    let measure = write_bernoulli(dir.path());
    let out = run(
        &["bounds", &measure, "--n-range", "1:100", "--out", "b.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = data_rows(&dir.path().join("b.csv"));
    assert_eq!(rows.len(), 100);
    let last = &rows[99];
    assert_eq!(last[0], "100");
    let y_lower: f64 = last[1].parse().unwrap();
    let y_upper: f64 = last[2].parse().unwrap();
    assert!((y_lower - 10.0).abs() < 1e-12);
    assert!((y_upper - 20400.0).abs() < 1e-9);

    let text = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert!(text.contains("# growth_rate: 3.4657359027997264e-1"));
}

#[test]
fn bounds_normalize_matches_unit_mean() {
    let dir = tempfile::tempdir().unwrap();
    let measure = write_bernoulli(dir.path());
    let double = dir.path().join("double.json");
    std::fs::write(
        &double,
        r#"{"label": "2b", "atoms": [{"x": 0.0, "w": 0.5}, {"x": 4.0, "w": 0.5}]}"#,
    )
    .unwrap();

    // mean 2 without --normalize is a validation failure
    let out = run(&["bounds", "double.json", "--out", "x.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    // normalized, the bounds coincide with those of the mean-1 measure
    let out = run(
        &["bounds", "double.json", "--normalize", "--n-range", "1:10", "--out", "n.csv"],
        dir.path(),
    );
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("scale factor"));
    let out = run(
        &["bounds", &measure, "--n-range", "1:10", "--out", "r.csv"],
        dir.path(),
    );
    assert!(out.status.success());
    assert_eq!(
        data_rows(&dir.path().join("n.csv")),
        data_rows(&dir.path().join("r.csv"))
    );
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let measure = write_bernoulli(dir.path());
    let args = [
        "simulate", measure.as_str(), "--mode", "cyclic", "--dim", "20", "--steps", "4",
        "--trials", "2", "--seed", "42", "--out",
    ];
    for out_name in ["a.csv", "b.csv"] {
        let mut argv: Vec<&str> = args.to_vec();
        argv.push(out_name);
        let out = run(&argv, dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b, "same seed must give byte-identical CSV bodies");
    assert_eq!(
        std::fs::read(dir.path().join("a.csv.summary.json")).unwrap(),
        std::fs::read(dir.path().join("b.csv.summary.json")).unwrap()
    );
    assert!(dir.path().join("a.csv.manifest.json").exists());

    // cyclic trials carry the extra column
    let rows = data_rows(&dir.path().join("a.csv"));
    assert_eq!(rows.len(), 8);
    assert_eq!(rows[0].len(), 5);
}

#[test]
fn simulate_zero_measure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zero.json");
    std::fs::write(&path, r#"{"label": "zero", "atoms": [{"x": 0.0, "w": 1.0}]}"#).unwrap();
    let out = run(
        &["simulate", "zero.json", "--dim", "8", "--steps", "2", "--trials", "1", "--out", "z.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    // partial results are still written
    assert!(dir.path().join("z.csv").exists());
}

#[test]
fn invert_bernoulli_peaks_at_atoms() {
    let dir = tempfile::tempdir().unwrap();
    let measure = write_bernoulli(dir.path());
    let out = run(
        &["invert", &measure, "--grid", "-0.5:2.5:0.5", "--eps", "0.001", "--out", "d.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = data_rows(&dir.path().join("d.csv"));
    for row in &rows {
        let x: f64 = row[0].parse().unwrap();
        let density: f64 = row[1].parse().unwrap();
        if x == 0.0 || x == 2.0 {
            assert!(density > 100.0, "atom at {x}: {density}");
        } else {
            assert!(density.abs() < 1e-3, "gap at {x}: {density}");
        }
    }
}

#[test]
fn invert_four_fold_edge_within_support_bound() {
    let dir = tempfile::tempdir().unwrap();
    let measure = write_bernoulli(dir.path());
    let out = run(
        &["invert", &measure, "--n", "4", "--grid", "20:40:5", "--out", "d4.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("d4.csv")).unwrap();
    let edge_line = text
        .lines()
        .find(|l| l.starts_with("# support_edge:"))
        .expect("edge comment present");
    let edge: f64 = edge_line
        .split_whitespace()
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert!(edge > 0.0 && edge <= 816.0, "edge {edge}"); // 102 L n = 816
}

#[test]
fn invert_rejects_bad_grid() {
    let dir = tempfile::tempdir().unwrap();
    let measure = write_bernoulli(dir.path());
    for grid in ["5:1:0.5", "1:2:-0.1", "oops"] {
        let out = run(
            &["invert", &measure, "--grid", grid, "--out", "g.csv"],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(2), "grid {grid:?}");
    }
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use robust_scatter::io::read_samples_file;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_robust-scatter"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_sample(dir: &Path, name: &str, beta: &str) {
    let o = run(&["sample", "--n", "120", "--p", "5", "--beta", beta, "--pattern", "banded:2", "--seed", "4", "--out", name], dir);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn sample_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    write_sample(dir.path(), "a.csv", "0.5");
    write_sample(dir.path(), "b.csv", "0.5");
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 120);
    assert!(text.lines().all(|l| l.split(',').count() == 5));
}

#[test]
fn gaussian_full_fit_reports_second_moment() {
    let dir = tempfile::tempdir().unwrap();
    write_sample(dir.path(), "d.csv", "1");
    let o = run(&["fit", "--rho", "mggd", "--beta", "1", "--pattern", "full", "d.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let scatter: Vec<f64> = report["scatter"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let data = read_samples_file::<f64>(dir.path().join("d.csv")).unwrap();
    let m = data.second_moment();
    for i in 0..5 {
        for j in 0..5 {
            assert!((scatter[i * 5 + j] - m[(i, j)]).abs() <= 1e-10 * m.amax());
        }
    }
    assert_eq!(report["p"], 5);
}

#[test]
fn fit_methods_run() {
    let dir = tempfile::tempdir().unwrap();
    write_sample(dir.path(), "d.csv", "0.5");
    for args in [
        vec!["fit", "--pattern", "banded:2", "d.csv"],
        vec!["fit", "--pattern", "banded:2", "--method", "direct", "d.csv"],
        vec!["fit", "--method", "l1", "--lambda", "2", "d.csv"],
        vec!["fit", "--rho", "tyler", "d.csv"],
        vec!["fit", "--rho", "huber", "--threshold", "3", "--pattern", "diagonal", "d.csv"],
        vec!["fit", "--pattern", r#"{"edges": [[1, 2], [2, 3]]}"#, "--method", "joint-mean", "d.csv"],
    ] {
        let o = run(&args, dir.path());
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert!(v["objective_trace"].is_array(), "{args:?}");
    }
}

#[test]
fn exit_codes_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    write_sample(dir.path(), "d.csv", "0.5");
    fs::write(dir.path().join("bad.csv"), "1,2\n3,oops\n").unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"trials": 3, "unknown": true}"#).unwrap();
    let cases: [(&[&str], i32); 6] = [
        (&["fit", "missing.csv"], 3),
        (&["fit", "bad.csv"], 3),
        (&["fit", "--pattern", "banded:9", "d.csv"], 2),
        (&["fit", "--beta", "0.25", "--method", "direct", "--pattern", "banded:2", "d.csv"], 4),
        (&["exp1", "--config", "bad.json"], 2),
        (&["sonar", "--data", "missing.data"], 3),
    ];
    for (args, code) in cases {
        let o = run(args, dir.path());
        assert_eq!(o.status.code(), Some(code), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("error: "), "{args:?}");
    }
    let o = run(&["fit", "--rho", "nonsense", "d.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exp1_emits_all_columns_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["exp1", "--trials", "3", "--n-grid", "20,40", "--seed", "1", "--out"];
    let a = bin().args(args).arg("a.csv").current_dir(dir.path()).output().unwrap();
    assert!(a.status.success(), "{}", stderr(&a));
    let b = bin()
        .args(args)
        .arg("b.csv")
        .env("ROBUST_SCATTER_THREADS", "1")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(b.status.success());
    let text = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(text, fs::read_to_string(dir.path().join("b.csv")).unwrap());
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("estimator,n,mean_error,stderr,trials"));
    let names: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    for e in ["G", "BG", "MGGD", "BMGGD_identity_init", "BMGGD_truth_init", "G_raw", "BG_raw"] {
        assert_eq!(names.iter().filter(|&&n| n == e).count(), 2, "{e}");
    }
}

#[test]
fn exp3_and_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"trials": 2, "n_grid": [30], "estimators": ["BG", "BMGGD_identity_init"], "seed": 5}"#,
    )
    .unwrap();
    let o = run(&["exp3", "--config", "cfg.json", "--out", "e3.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("e3.csv")).unwrap();
    assert_eq!(text.lines().count(), 4, "{text}");
    assert!(text.contains("BMGGD_identity_init,30,") && text.contains("BG_raw,30,"));
    let o = run(&["exp2", "--trials", "2", "--n-grid", "40", "--estimators", "MGGD"], dir.path());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("estimator,n"));
}

#[test]
fn sonar_rejects_malformed_files() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.data"), "").unwrap();
    fs::write(dir.path().join("short.data"), "0.1,0.2,R\n").unwrap();
    for f in ["empty.data", "short.data"] {
        let o = run(&["sonar", "--data", f], dir.path());
        assert_eq!(o.status.code(), Some(3), "{f}: {}", stderr(&o));
    }
}

#[test]
fn help_documents_seeding() {
    let o = bin().arg("--help").output().unwrap();
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("seed + t") && text.contains("ROBUST_SCATTER_THREADS"));
}

#[test]
fn selftest_passes() {
    let o = bin().args(["selftest", "--seed", "2"]).output().unwrap();
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{out}");
    assert_eq!(out.lines().filter(|l| l.starts_with("[PASS]")).count(), 9, "{out}");
}

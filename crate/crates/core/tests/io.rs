use std::fs;

use nalgebra::DMatrix;
use robust_scatter::io::*;
use robust_scatter::{banded_pattern, Error, SampleSet, SparsityPattern};

#[test]
fn samples_round_trip_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    let data = SampleSet::new(DMatrix::from_fn(7, 3, |i, j| ((i * 3 + j) as f64).sin() * 1e3)).unwrap();
    write_samples(&data, fs::File::create(&path).unwrap()).unwrap();
    let back: SampleSet<f64> = read_samples_file(&path).unwrap();
    assert_eq!(back.rows(), data.rows());
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.lines().next().unwrap().split(',').all(|f| f.contains('e')));
    let single: SampleSet<f32> = read_samples_file(&path).unwrap();
    assert_eq!(single.p(), 3);
}

#[test]
fn missing_files_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_samples_file::<f64>(dir.path().join("none.csv")), Err(Error::Io(_))));
    assert!(matches!(load_sonar::<f64>(dir.path().join("none.data")), Err(Error::Io(_))));
}

#[test]
fn pattern_json_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    let g = banded_pattern(5, 3).unwrap();
    fs::write(&path, pattern_to_json(&g).unwrap()).unwrap();
    assert_eq!(read_pattern_json(&path).unwrap(), g);
    fs::write(&path, r#"{"p": 3, "edges": [[1, 2], [2, 3]]}"#).unwrap();
    assert_eq!(read_pattern_json(&path).unwrap(), SparsityPattern::from_edges(3, [(0, 1), (1, 2)]).unwrap());
    fs::write(&path, r#"{"p": 3, "edges": [], "extra": 1}"#).unwrap();
    assert!(read_pattern_json(&path).is_err());
}

#[test]
fn run_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    fs::write(&path, r#"{"p": 9, "pattern": {"grid": [3, 3]}, "trials": 4, "output": "out.csv"}"#).unwrap();
    let cfg = RunConfig::from_path(&path).unwrap();
    assert_eq!(cfg.pattern.as_ref().unwrap().build(9).unwrap().num_edges(), 12);
    assert_eq!(cfg.output.as_deref(), Some(std::path::Path::new("out.csv")));
    fs::write(&path, r#"{"trials": 0}"#).unwrap();
    assert!(matches!(RunConfig::from_path(&path), Err(Error::Config(_))));
}

#[test]
fn sonar_truncated_line_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.data");
    let src = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/sonar.all-data")).unwrap();
    let mut lines: Vec<String> = src.lines().take(5).map(String::from).collect();
    lines[3] = lines[3][..40].to_string();
    fs::write(&path, lines.join("\n")).unwrap();
    match load_sonar::<f64>(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
}

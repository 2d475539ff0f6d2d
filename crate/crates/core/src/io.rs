//! File formats: sample CSV, the SONAR data file, sparsity patterns and
//! run configurations.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{EstimatorKind, LabeledDataset};
use crate::graph::{banded_pattern, grid_pattern, SparsityPattern};
use crate::models::SampleSet;
use crate::scalar::Real;

/// Features per SONAR record.
pub const SONAR_FEATURES: usize = 60;

/// Where the SONAR file can be obtained. It is never downloaded.
pub const SONAR_URL: &str =
    "https://archive.ics.uci.edu/ml/machine-learning-databases/undocumented/connectionist-bench/sonar/sonar.all-data";

/// Reads one observation per line, comma separated, no header.
pub fn read_samples<T: Real, R: Read>(input: R) -> Result<SampleSet<T>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(input);
    let mut values = Vec::new();
    let mut width = None;
    let mut n = 0;
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 1;
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {w} fields, found {}", rec.len()),
                })
            }
            _ => {}
        }
        for field in rec.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("not a number: {field:?}"),
            })?;
            values.push(T::lit(v));
        }
        n += 1;
    }
    let p = width.ok_or_else(|| Error::WrongShape("no observations".into()))?;
    SampleSet::new(DMatrix::from_row_slice(n, p, &values))
}

pub fn read_samples_file<T: Real>(path: impl AsRef<Path>) -> Result<SampleSet<T>> {
    read_samples(fs::File::open(path)?)
}

/// Writes one observation per line with 17 significant digits.
pub fn write_samples<T: Real, W: Write>(data: &SampleSet<T>, out: W) -> Result<()> {
    write_matrix(data.rows(), out)
}

pub fn write_matrix<T: Real, W: Write>(m: &DMatrix<T>, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for r in m.row_iter() {
        w.write_record(r.iter().map(|x| format_real(*x)))?;
    }
    w.flush()?;
    Ok(())
}

/// Scientific notation with 17 significant digits.
pub fn format_real<T: Real>(x: T) -> String {
    format!("{:.16e}", x.as_f64())
}

/// Parses the SONAR file: 60 comma-separated reals then `M` (metal) or `R`
/// (rock) on every non-blank line. Class 0 is metal, class 1 is rock.
pub fn read_sonar<T: Real, R: Read>(mut input: R) -> Result<LabeledDataset<T>> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        let (label, feats) = fields.split_last().expect("split yields at least one field");
        let label = match *label {
            "M" => 0,
            "R" => 1,
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected label M or R, found {other:?}"),
                })
            }
        };
        if feats.len() != SONAR_FEATURES {
            return Err(Error::WrongShape(format!(
                "line {line}: expected {SONAR_FEATURES} features, found {}",
                feats.len()
            )));
        }
        for f in feats {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("not a number: {f:?}"),
            })?;
            values.push(T::lit(v));
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::WrongShape("no records".into()));
    }
    let features = DMatrix::from_row_slice(labels.len(), SONAR_FEATURES, &values);
    LabeledDataset::new(features, labels, vec!["metal".into(), "rock".into()])
}

pub fn load_sonar<T: Real>(path: impl AsRef<Path>) -> Result<LabeledDataset<T>> {
    read_sonar(fs::File::open(path)?)
}

pub fn read_pattern_json(path: impl AsRef<Path>) -> Result<SparsityPattern> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn pattern_to_json(g: &SparsityPattern) -> Result<String> {
    Ok(serde_json::to_string(g)?)
}

/// Pattern description used in configs: `"full"`, `"diagonal"`,
/// `{"banded": d}`, `{"grid": [rows, cols]}` or `{"edges": [[i, j], ...]}`
/// with 1-based vertices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum PatternSpec {
    Full,
    Diagonal,
    Banded(usize),
    Grid([usize; 2]),
    Edges(Vec<[usize; 2]>),
}

impl PatternSpec {
    pub fn build(&self, p: usize) -> Result<SparsityPattern> {
        let g = match self {
            PatternSpec::Full => SparsityPattern::complete(p),
            PatternSpec::Diagonal => SparsityPattern::empty(p),
            PatternSpec::Banded(d) => banded_pattern(p, *d)?,
            PatternSpec::Grid([r, c]) => grid_pattern(*r, *c)?,
            PatternSpec::Edges(e) => {
                let mut edges = Vec::with_capacity(e.len());
                for &[a, b] in e {
                    if a == 0 || b == 0 {
                        return Err(Error::InvalidEdge(a, b));
                    }
                    edges.push((a - 1, b - 1));
                }
                SparsityPattern::from_edges(p, edges)?
            }
        };
        if g.p() != p {
            return Err(Error::DimensionMismatch { expected: p, got: g.p() });
        }
        Ok(g)
    }

    /// Short command-line form: `full`, `diagonal`, `banded:D`, `grid:RxC`,
    /// or inline JSON.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("unrecognized pattern {s:?}"));
        if s.starts_with('{') || s.starts_with('"') {
            return serde_json::from_str(s).map_err(|e| Error::Config(format!("pattern: {e}")));
        }
        match s.split_once(':') {
            None if s == "full" => Ok(PatternSpec::Full),
            None if s == "diagonal" => Ok(PatternSpec::Diagonal),
            Some(("banded", d)) => Ok(PatternSpec::Banded(d.parse().map_err(|_| bad())?)),
            Some(("grid", rc)) => {
                let (r, c) = rc.split_once('x').ok_or_else(bad)?;
                Ok(PatternSpec::Grid([r.parse().map_err(|_| bad())?, c.parse().map_err(|_| bad())?]))
            }
            _ => Err(bad()),
        }
    }
}

/// Parameters shared by the command-line subcommands. Every field is
/// optional; command-line flags override values read from a file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub beta: Option<f64>,
    pub p: Option<usize>,
    pub pattern: Option<PatternSpec>,
    pub n_grid: Option<Vec<usize>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub estimators: Option<Vec<String>>,
    pub data: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub max_iter: Option<usize>,
    pub rel_tol: Option<f64>,
}

impl RunConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    /// Values in `other` take precedence.
    pub fn overlay(self, other: RunConfig) -> Self {
        Self {
            beta: other.beta.or(self.beta),
            p: other.p.or(self.p),
            pattern: other.pattern.or(self.pattern),
            n_grid: other.n_grid.or(self.n_grid),
            trials: other.trials.or(self.trials),
            seed: other.seed.or(self.seed),
            estimators: other.estimators.or(self.estimators),
            data: other.data.or(self.data),
            output: other.output.or(self.output),
            max_iter: other.max_iter.or(self.max_iter),
            rel_tol: other.rel_tol.or(self.rel_tol),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if let Some(b) = self.beta {
            if !(b > 0.0 && b.is_finite()) {
                return fail("beta must be positive");
            }
        }
        if self.p == Some(0) {
            return fail("p must be positive");
        }
        if self.trials == Some(0) {
            return fail("trials must be at least 1");
        }
        if let Some(g) = &self.n_grid {
            if g.is_empty() || g.contains(&0) {
                return fail("n_grid must hold positive sample sizes");
            }
        }
        if self.max_iter == Some(0) {
            return fail("max_iter must be at least 1");
        }
        if let Some(t) = self.rel_tol {
            if !(t > 0.0) {
                return fail("rel_tol must be positive");
            }
        }
        if let Some(es) = &self.estimators {
            if let Some(bad) = es.iter().find(|e| EstimatorKind::parse(e).is_none()) {
                return Err(Error::Config(format!("unknown estimator {bad:?}")));
            }
        }
        Ok(())
    }

    pub fn estimator_kinds(&self) -> Option<Vec<EstimatorKind>> {
        self.estimators
            .as_ref()
            .map(|v| v.iter().filter_map(|e| EstimatorKind::parse(e)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_csv_round_trip_is_exact() {
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -2.5e-300, 1.0 / 3.0, 7.0, f64::MIN_POSITIVE, 1e300]);
        let data = SampleSet::new(m.clone()).unwrap();
        let mut buf = Vec::new();
        write_samples(&data, &mut buf).unwrap();
        let back: SampleSet<f64> = read_samples(buf.as_slice()).unwrap();
        assert_eq!(back.rows(), &m);
    }

    #[test]
    fn sample_csv_errors() {
        let e = read_samples::<f64, _>("1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = read_samples::<f64, _>("1,2\n3,x\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        assert!(matches!(read_samples::<f64, _>("".as_bytes()), Err(Error::WrongShape(_))));
    }

    fn sonar_line(k: usize, label: &str) -> String {
        let mut f: Vec<String> = (0..k).map(|i| format!("0.{:03}", i + 1)).collect();
        f.push(label.into());
        f.join(",")
    }

    #[test]
    fn sonar_parsing() {
        let text = format!("{}\n{}\n{}\n", sonar_line(60, "R"), sonar_line(60, "M"), sonar_line(60, "M"));
        let d: LabeledDataset<f64> = read_sonar(text.as_bytes()).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.class_counts(), vec![2, 1]);
        assert_eq!(d.features[(1, 59)], 0.06);

        let text = format!("{}\n0.1,0.2,0.3\n", sonar_line(60, "R"));
        assert!(matches!(read_sonar::<f64, _>(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let text = format!("{}\n{}\n", sonar_line(60, "R"), sonar_line(59, "M"));
        assert!(matches!(read_sonar::<f64, _>(text.as_bytes()), Err(Error::WrongShape(_))));
        assert!(matches!(read_sonar::<f64, _>("".as_bytes()), Err(Error::WrongShape(_))));
        assert!(matches!(read_sonar::<f64, _>("\n\n".as_bytes()), Err(Error::WrongShape(_))));
    }

    #[test]
    fn pattern_specs() {
        assert_eq!(PatternSpec::parse("full").unwrap(), PatternSpec::Full);
        assert_eq!(PatternSpec::parse("banded:4").unwrap(), PatternSpec::Banded(4));
        assert_eq!(PatternSpec::parse("grid:3x3").unwrap(), PatternSpec::Grid([3, 3]));
        assert_eq!(PatternSpec::parse(r#"{"edges": [[1, 2]]}"#).unwrap(), PatternSpec::Edges(vec![[1, 2]]));
        assert!(PatternSpec::parse("banded").is_err());
        assert_eq!(PatternSpec::Banded(2).build(3).unwrap().num_edges(), 2);
        assert!(PatternSpec::Grid([3, 3]).build(8).is_err());
        assert!(matches!(PatternSpec::Edges(vec![[0, 1]]).build(3), Err(Error::InvalidEdge(0, 1))));
        assert!(PatternSpec::Full.build(4).unwrap().is_complete());
    }

    #[test]
    fn run_config_schema() {
        let cfg = RunConfig::from_json_str(r#"{"beta": 0.5, "pattern": {"banded": 4}, "n_grid": [20, 40], "seed": 3}"#)
            .unwrap();
        assert_eq!(cfg.pattern, Some(PatternSpec::Banded(4)));
        assert_eq!(cfg.n_grid, Some(vec![20, 40]));
        assert!(RunConfig::from_json_str(r#"{"betta": 0.5}"#).is_err());
        assert!(RunConfig::from_json_str(r#"{"beta": -1}"#).is_err());
        assert!(RunConfig::from_json_str(r#"{"pattern": "full"}"#).is_ok());
        assert!(RunConfig::from_json_str(r#"{"pattern": {"banded": 4, "x": 1}}"#).is_err());
        assert!(RunConfig::from_json_str(r#"{"estimators": ["G", "XX"]}"#).is_err());
        let merged = cfg.overlay(RunConfig { seed: Some(9), ..Default::default() });
        assert_eq!((merged.seed, merged.beta), (Some(9), Some(0.5)));
    }
}

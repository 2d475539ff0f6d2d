//! Monte-Carlo harness for the synthetic sweeps, quadratic discriminant
//! analysis, the SONAR leave-one-out protocol and ground-truth constructors.
//!
//! Seeds: trial `t` of a synthetic sweep draws its data from `seed + t`.
//! All sample sizes of one trial share that draw (the size-`n` dataset is
//! the first `n` rows of the largest one). In the SONAR protocol the
//! validation splits for leave-one-out fold `i` use `seed + i`, and the
//! full-class models use `seed + n + c` for class `c`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{fit_fixed_point, fit_graphical_mm, gaussian_pattern_mle, FitConfig, Init};
use crate::graph::{banded_pattern, grid_pattern, is_g_sparse, SparsityPattern};
use crate::models::{covariance_scale, mggd_log_likelihood, mggd_sample, RhoFamily, SampleSet};
use crate::scalar::Real;
use crate::spd::{normalized_sq_frobenius_error, relative_frobenius, SpdMatrix};

/// Default off-diagonal constant for grid precision matrices.
pub const DEFAULT_GRID_OFFDIAG: f64 = 0.2;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "ROBUST_SCATTER_THREADS";

/// A precision matrix `K` and the matching scatter `K⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<T: Real> {
    pub precision: SpdMatrix<T>,
    pub scatter: SpdMatrix<T>,
}

pub fn toeplitz_banded_precision<T: Real>(p: usize, width: usize, diag: T, offdiag: T) -> Result<GroundTruth<T>> {
    if p == 0 || width == 0 {
        return Err(Error::InvalidBandwidth { p, d: width });
    }
    let k = DMatrix::from_fn(p, p, |i, j| {
        let d = usize::abs_diff(i, j);
        if d == 0 {
            diag
        } else if d < width {
            offdiag
        } else {
            T::zero()
        }
    });
    let precision = SpdMatrix::new(k)?;
    let scatter = precision.inverse()?;
    Ok(GroundTruth { precision, scatter })
}

/// `K = I + offdiag · A` with `A` the adjacency matrix of a `rows × cols`
/// grid. Requires strict diagonal dominance.
pub fn grid_precision<T: Real>(rows: usize, cols: usize, offdiag: T) -> Result<GroundTruth<T>> {
    let g = grid_pattern(rows, cols)?;
    let degree = g.max_degree();
    if offdiag.abs() * T::from_count(degree) >= T::one() {
        return Err(Error::NotDiagonallyDominant { offdiag: offdiag.as_f64(), degree });
    }
    let p = g.p();
    let mut k = DMatrix::identity(p, p);
    for (i, j) in g.edges() {
        k[(i, j)] = offdiag;
        k[(j, i)] = offdiag;
    }
    let precision = SpdMatrix::new(k)?;
    let scatter = precision.inverse()?;
    Ok(GroundTruth { precision, scatter })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    /// Sample second moment.
    #[serde(rename = "G")]
    Gaussian,
    /// Gaussian MLE under the sparsity pattern.
    #[serde(rename = "BG")]
    PatternGaussian,
    /// Unconstrained MGGD fixed point.
    #[serde(rename = "MGGD")]
    Mggd,
    /// Constrained MGGD by MM started at the identity.
    #[serde(rename = "BMGGD_identity_init")]
    PatternMggdIdentity,
    /// Constrained MGGD by MM started at the true scatter.
    #[serde(rename = "BMGGD_truth_init")]
    PatternMggdTruth,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::Gaussian,
        EstimatorKind::PatternGaussian,
        EstimatorKind::Mggd,
        EstimatorKind::PatternMggdIdentity,
        EstimatorKind::PatternMggdTruth,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Gaussian => "G",
            EstimatorKind::PatternGaussian => "BG",
            EstimatorKind::Mggd => "MGGD",
            EstimatorKind::PatternMggdIdentity => "BMGGD_identity_init",
            EstimatorKind::PatternMggdTruth => "BMGGD_truth_init",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.label().eq_ignore_ascii_case(s))
    }

    fn is_gaussian(self) -> bool {
        matches!(self, EstimatorKind::Gaussian | EstimatorKind::PatternGaussian)
    }

    fn is_constrained(self) -> bool {
        matches!(
            self,
            EstimatorKind::PatternGaussian | EstimatorKind::PatternMggdIdentity | EstimatorKind::PatternMggdTruth
        )
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSpec<T: Real> {
    pub p: usize,
    pub beta: T,
    pub pattern: SparsityPattern,
    pub truth: SpdMatrix<T>,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub estimators: Vec<EstimatorKind>,
    pub seed: u64,
    /// Settings for the iterative estimators; the init field is overridden
    /// per estimator.
    pub fit: FitConfig<T>,
}

impl<T: Real> SyntheticSpec<T> {
    pub fn new(beta: T, pattern: SparsityPattern, truth: SpdMatrix<T>, n_grid: Vec<usize>, trials: usize, seed: u64) -> Self {
        Self {
            p: truth.dim(),
            beta,
            pattern,
            truth,
            n_grid,
            trials,
            estimators: EstimatorKind::ALL.to_vec(),
            seed,
            fit: FitConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(Error::Config("n_grid must hold positive sample sizes".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators requested".into()));
        }
        if !(self.beta > T::zero()) {
            return Err(Error::InvalidShape(self.beta.as_f64()));
        }
        if self.truth.dim() != self.p || self.pattern.p() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                got: if self.truth.dim() != self.p { self.truth.dim() } else { self.pattern.p() },
            });
        }
        let k = self.truth.inverse()?;
        if !is_g_sparse(k.as_matrix(), &self.pattern, T::lit(1e-12))? {
            return Err(Error::Config("inverse of the true scatter is not sparse on the pattern".into()));
        }
        self.fit.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRow {
    pub estimator: String,
    pub n: usize,
    pub mean_error: f64,
    #[serde(rename = "stderr")]
    pub std_error: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierRow {
    pub method: String,
    pub loo_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub estimator: String,
    pub n: usize,
    pub trial: usize,
    pub message: String,
}

/// Largest and mean relative Frobenius gap between the identity-started and
/// truth-started constrained MGGD estimates at one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct InitGap {
    pub n: usize,
    pub max: f64,
    pub mean: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResultTable {
    Synthetic {
        rows: Vec<SyntheticRow>,
        failures: Vec<TrialFailure>,
        init_gaps: Vec<InitGap>,
    },
    Classification {
        rows: Vec<ClassifierRow>,
    },
}

impl ResultTable {
    pub fn synthetic_rows(&self) -> &[SyntheticRow] {
        match self {
            ResultTable::Synthetic { rows, .. } => rows,
            ResultTable::Classification { .. } => &[],
        }
    }

    pub fn classifier_rows(&self) -> &[ClassifierRow] {
        match self {
            ResultTable::Classification { rows } => rows,
            ResultTable::Synthetic { .. } => &[],
        }
    }

    pub fn row(&self, estimator: &str, n: usize) -> Option<&SyntheticRow> {
        self.synthetic_rows().iter().find(|r| r.estimator == estimator && r.n == n)
    }

    pub fn loo_error(&self, method: &str) -> Option<f64> {
        self.classifier_rows().iter().find(|r| r.method == method).map(|r| r.loo_error)
    }

    /// Writes the table as CSV with every real in 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        match self {
            ResultTable::Synthetic { rows, .. } => {
                w.write_record(["estimator", "n", "mean_error", "stderr", "trials"])?;
                for r in rows {
                    w.write_record([
                        r.estimator.clone(),
                        r.n.to_string(),
                        format!("{:.16e}", r.mean_error),
                        format!("{:.16e}", r.std_error),
                        r.trials.to_string(),
                    ])?;
                }
            }
            ResultTable::Classification { rows } => {
                w.write_record(["method", "loo_error"])?;
                for r in rows {
                    w.write_record([r.method.clone(), format!("{:.16e}", r.loo_error)])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is ascii"))
    }
}

/// Runs `f` inside a pool capped by [`THREADS_ENV`] when that is set.
pub fn with_thread_cap<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    let cap = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&c| c > 0);
    match cap.and_then(|c| rayon::ThreadPoolBuilder::new().num_threads(c).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

type Outcome = std::result::Result<f64, String>;

struct TrialResult {
    /// Indexed `[n_index][column]`.
    errors: Vec<Vec<Outcome>>,
    gaps: Vec<Option<f64>>,
}

/// Column layout: each requested estimator, then uncorrected copies of the
/// Gaussian ones.
fn columns(spec_est: &[EstimatorKind]) -> Vec<(EstimatorKind, bool)> {
    let mut cols: Vec<_> = spec_est.iter().map(|&e| (e, true)).collect();
    cols.extend(spec_est.iter().filter(|e| e.is_gaussian()).map(|&e| (e, false)));
    cols
}

fn column_label(e: EstimatorKind, corrected: bool) -> String {
    if corrected {
        e.label().to_string()
    } else {
        format!("{}_raw", e.label())
    }
}

fn run_trial<T: Real>(spec: &SyntheticSpec<T>, t: usize, cols: &[(EstimatorKind, bool)]) -> TrialResult {
    let n_max = *spec.n_grid.iter().max().expect("validated");
    let p = spec.p;
    let seed = spec.seed.wrapping_add(t as u64);
    let all = mggd_sample(n_max, &DVector::zeros(p), &spec.truth, spec.beta, seed);
    let family = RhoFamily::Mggd { beta: spec.beta };
    let scale = T::lit(covariance_scale(spec.beta.as_f64(), p));
    let truth = spec.truth.as_matrix();
    let mut errors = Vec::with_capacity(spec.n_grid.len());
    let mut gaps = Vec::with_capacity(spec.n_grid.len());
    for &n in &spec.n_grid {
        let data = match &all {
            Ok(d) => d.select(&(0..n).collect::<Vec<_>>()),
            Err(e) => {
                errors.push(cols.iter().map(|_| Err(e.to_string())).collect());
                gaps.push(None);
                continue;
            }
        };
        let mut estimates: Vec<(EstimatorKind, std::result::Result<SpdMatrix<T>, String>)> = Vec::new();
        for &e in &spec.estimators {
            let est = estimate(e, &data, &family, spec).map_err(|err| err.to_string());
            estimates.push((e, est));
        }
        let row = cols
            .iter()
            .map(|&(e, corrected)| {
                let (_, est) = estimates.iter().find(|(k, _)| *k == e).expect("column from spec");
                let est = est.as_ref().map_err(Clone::clone)?;
                let m = if e.is_gaussian() && corrected {
                    est.as_matrix() / scale
                } else {
                    est.as_matrix().clone()
                };
                normalized_sq_frobenius_error(&m, truth).map(|v| v.as_f64()).map_err(|e| e.to_string())
            })
            .collect();
        errors.push(row);
        let find = |k| estimates.iter().find(|(e, _)| *e == k).and_then(|(_, r)| r.as_ref().ok());
        gaps.push(
            match (find(EstimatorKind::PatternMggdIdentity), find(EstimatorKind::PatternMggdTruth)) {
                (Some(a), Some(b)) => Some(relative_frobenius(a.as_matrix(), b.as_matrix()).as_f64()),
                _ => None,
            },
        );
    }
    TrialResult { errors, gaps }
}

fn estimate<T: Real>(
    e: EstimatorKind,
    data: &SampleSet<T>,
    family: &RhoFamily<T>,
    spec: &SyntheticSpec<T>,
) -> Result<SpdMatrix<T>> {
    let est = match e {
        EstimatorKind::Gaussian => SpdMatrix::new(data.second_moment())?,
        EstimatorKind::PatternGaussian => gaussian_pattern_mle(data, &spec.pattern, &spec.fit)?,
        EstimatorKind::Mggd => fit_fixed_point(data, family, &spec.fit.clone().with_init(Init::Identity))?.scatter,
        EstimatorKind::PatternMggdIdentity => {
            fit_graphical_mm(data, family, &spec.pattern, &spec.fit.clone().with_init(Init::Identity))?.scatter
        }
        EstimatorKind::PatternMggdTruth => {
            fit_graphical_mm(data, family, &spec.pattern, &spec.fit.clone().with_init(Init::Given(spec.truth.clone())))?
                .scatter
        }
    };
    if e.is_constrained() && !is_g_sparse(est.inverse()?.as_matrix(), &spec.pattern, T::lit(1e-8))? {
        return Err(Error::DomainError(format!("{} estimate is not sparse on the pattern", e.label())));
    }
    Ok(est)
}

/// Runs every requested estimator on `trials` independent datasets for each
/// sample size and aggregates the normalized squared Frobenius errors.
///
/// Gaussian estimators target `c(β)·Σ`; their `G`/`BG` rows are divided by
/// `c(β)` first, and `G_raw`/`BG_raw` rows report the uncorrected error.
/// Failed fits are listed in `failures` and left out of the averages.
/// Output is identical for any thread count.
pub fn run_synthetic<T: Real>(spec: &SyntheticSpec<T>) -> Result<ResultTable> {
    spec.validate()?;
    let cols = columns(&spec.estimators);
    let trials: Vec<TrialResult> =
        with_thread_cap(|| (0..spec.trials).into_par_iter().map(|t| run_trial(spec, t, &cols)).collect());

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (c, &(e, corrected)) in cols.iter().enumerate() {
        let label = column_label(e, corrected);
        for (k, &n) in spec.n_grid.iter().enumerate() {
            let mut ok = Vec::with_capacity(spec.trials);
            for (t, tr) in trials.iter().enumerate() {
                match &tr.errors[k][c] {
                    Ok(v) => ok.push(*v),
                    Err(msg) if corrected => failures.push(TrialFailure {
                        estimator: label.clone(),
                        n,
                        trial: t,
                        message: msg.clone(),
                    }),
                    Err(_) => {}
                }
            }
            let (mean, se) = mean_and_stderr(&ok);
            rows.push(SyntheticRow {
                estimator: label.clone(),
                n,
                mean_error: mean,
                std_error: se,
                trials: ok.len(),
            });
        }
    }
    let mut init_gaps = Vec::new();
    for (k, &n) in spec.n_grid.iter().enumerate() {
        let g: Vec<f64> = trials.iter().filter_map(|tr| tr.gaps[k]).collect();
        if !g.is_empty() {
            init_gaps.push(InitGap {
                n,
                max: g.iter().cloned().fold(0.0, f64::max),
                mean: g.iter().sum::<f64>() / g.len() as f64,
                trials: g.len(),
            });
        }
    }
    Ok(ResultTable::Synthetic { rows, failures, init_gaps })
}

fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    match v.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (v[0], 0.0),
        k => {
            let mean = v.iter().sum::<f64>() / k as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            (mean, (var / k as f64).sqrt())
        }
    }
}

/// One class of a quadratic discriminant classifier. The inverse covariance
/// and log-determinant are computed once at construction.
#[derive(Debug, Clone)]
pub struct ClassModel<T: Real> {
    pub mean: DVector<T>,
    pub covariance: SpdMatrix<T>,
    pub prior: T,
    precision: SpdMatrix<T>,
    log_det: T,
}

impl<T: Real> ClassModel<T> {
    pub fn new(mean: DVector<T>, covariance: SpdMatrix<T>, prior: T) -> Result<Self> {
        if mean.len() != covariance.dim() {
            return Err(Error::DimensionMismatch { expected: covariance.dim(), got: mean.len() });
        }
        if !(prior > T::zero()) {
            return Err(Error::DomainError("class prior must be positive".into()));
        }
        let precision = covariance.inverse()?;
        let log_det = covariance.log_det()?;
        Ok(Self { mean, covariance, prior, precision, log_det })
    }

    pub fn discriminant(&self, x: &DVector<T>) -> T {
        let d = x - &self.mean;
        let q = (self.precision.as_matrix() * &d).dot(&d);
        self.prior.ln() - T::lit(0.5) * self.log_det - T::lit(0.5) * q
    }
}

/// Index of the class with the largest discriminant; the earliest class
/// wins ties.
pub fn qda_classify<T: Real>(models: &[ClassModel<T>], x: &DVector<T>) -> Result<usize> {
    let first = models.first().ok_or_else(|| Error::Config("no class models".into()))?;
    if let Some(m) = models.iter().find(|m| m.mean.len() != x.len()) {
        return Err(Error::DimensionMismatch { expected: m.mean.len(), got: x.len() });
    }
    let mut best = (0, first.discriminant(x));
    for (k, m) in models.iter().enumerate().skip(1) {
        let s = m.discriminant(x);
        if s > best.1 {
            best = (k, s);
        }
    }
    Ok(best.0)
}

/// Features with a class index per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T: Real> {
    pub features: DMatrix<T>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl<T: Real> LabeledDataset<T> {
    pub fn new(features: DMatrix<T>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if labels.len() != features.nrows() {
            return Err(Error::DataShapeMismatch(format!(
                "{} labels for {} observations",
                labels.len(),
                features.nrows()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::DataShapeMismatch(format!("label {l} has no class name")));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::DataShapeMismatch("non-finite feature".into()));
        }
        Ok(Self { features, labels, class_names })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.class_names.len()];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    fn class_indices(&self, c: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i] == c).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SonarConfig<T: Real> {
    pub seed: u64,
    /// Random training/validation splits used for band and shape selection.
    pub splits: usize,
    /// Fraction of a class used for training in each split.
    pub train_fraction: f64,
    /// Candidate MGGD shapes.
    pub betas: Vec<T>,
    pub fit: FitConfig<T>,
}

impl<T: Real> Default for SonarConfig<T> {
    fn default() -> Self {
        Self {
            seed: 1,
            splits: 10,
            train_fraction: 1.0 / 3.0,
            betas: (5..=10).map(|k| T::lit(k as f64 / 10.0)).collect(),
            fit: FitConfig::default(),
        }
    }
}

impl<T: Real> SonarConfig<T> {
    fn validate(&self) -> Result<()> {
        if self.splits == 0 {
            return Err(Error::Config("splits must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
        }
        if self.betas.is_empty() || self.betas.iter().any(|b| !(*b > T::zero())) {
            return Err(Error::Config("betas must be positive and non-empty".into()));
        }
        self.fit.validate()
    }
}

pub const SONAR_METHODS: [&str; 4] = ["sample_covariance", "naive_bayes", "BG", "BMGGD"];

/// Mean and covariance for each method, plus the selected band and shape.
#[derive(Debug, Clone)]
struct ClassFits<T: Real> {
    mean: DVector<T>,
    covs: [SpdMatrix<T>; 4],
    band: usize,
    beta: T,
}

fn validation_splits(n: usize, cfg_splits: usize, frac: f64, rng: &mut ChaCha8Rng) -> Vec<(Vec<usize>, Vec<usize>)> {
    let n_train = ((n as f64) * frac).round().clamp(1.0, (n - 1) as f64) as usize;
    (0..cfg_splits)
        .map(|_| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            let val = idx.split_off(n_train);
            (idx, val)
        })
        .collect()
}

fn centered_fit_data<T: Real>(x: &SampleSet<T>) -> (DVector<T>, SampleSet<T>) {
    let mu = x.mean();
    let c = x.centered(&mu);
    (mu, c)
}

fn total_validation<T: Real>(
    x: &SampleSet<T>,
    splits: &[(Vec<usize>, Vec<usize>)],
    beta: T,
    mut fit: impl FnMut(&SampleSet<T>) -> Result<SpdMatrix<T>>,
) -> Option<T> {
    let mut total = T::zero();
    for (tr, va) in splits {
        let (mu, train) = centered_fit_data(&x.select(tr));
        let s = fit(&train).ok()?;
        let ll = mggd_log_likelihood(&x.select(va), &mu, &s, beta).ok()?;
        if !ll.is_finite() {
            return None;
        }
        total += ll;
    }
    Some(total)
}

fn best_by<T: Real, K: Copy>(cands: impl IntoIterator<Item = (K, Option<T>)>) -> Option<K> {
    let mut best: Option<(K, T)> = None;
    for (k, s) in cands {
        if let Some(s) = s {
            if best.as_ref().is_none_or(|(_, b)| s > *b) {
                best = Some((k, s));
            }
        }
    }
    best.map(|(k, _)| k)
}

fn fit_class<T: Real>(x: &SampleSet<T>, cfg: &SonarConfig<T>, seed: u64) -> Result<ClassFits<T>> {
    let p = x.p();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let splits = validation_splits(x.n(), cfg.splits, cfg.train_fraction, &mut rng);

    let band = best_by((1..=p).map(|d| {
        let g = banded_pattern(p, d).expect("1 <= d <= p");
        (d, total_validation(x, &splits, T::one(), |tr| gaussian_pattern_mle(tr, &g, &cfg.fit)))
    }))
    .ok_or_else(|| Error::RankDeficientData { n: x.n(), p })?;
    let g = banded_pattern(p, band)?;
    let beta = best_by(cfg.betas.iter().map(|&b| {
        let f = RhoFamily::Mggd { beta: b };
        (b, total_validation(x, &splits, b, |tr| Ok(fit_graphical_mm(tr, &f, &g, &cfg.fit)?.scatter)))
    }))
    .ok_or_else(|| Error::RankDeficientData { n: x.n(), p })?;

    let (mean, c) = centered_fit_data(x);
    let sample = SpdMatrix::new(c.second_moment())?;
    let diag: Vec<T> = (0..p).map(|j| sample.as_matrix()[(j, j)]).collect();
    let naive = SpdMatrix::from_diagonal(&diag)?;
    let bg = gaussian_pattern_mle(&c, &g, &cfg.fit)?;
    let scatter = fit_graphical_mm(&c, &RhoFamily::Mggd { beta }, &g, &cfg.fit)?.scatter;
    let bmggd = scatter.scaled(T::lit(covariance_scale(beta.as_f64(), p)))?;
    log::debug!("class fit: n = {}, band = {band}, beta = {beta}", x.n());
    Ok(ClassFits { mean, covs: [sample, naive, bg, bmggd], band, beta })
}

/// Band and shape chosen for each class on the full data.
#[derive(Debug, Clone, PartialEq)]
pub struct SonarSelection {
    pub class: String,
    pub band: usize,
    pub beta: f64,
}

/// Leave-one-out QDA error of the four covariance models.
///
/// For each class: sample mean and centering; the sample covariance; its
/// diagonal; the banded Gaussian MLE with the bandwidth maximizing the summed
/// Gaussian validation log-likelihood over random splits; and `c(β)Σ̂` from
/// the banded MGGD fit with the same band and the shape maximizing the MGGD
/// validation log-likelihood over the same splits. Bands and shapes are
/// reselected inside every fold. Priors follow class counts.
pub fn sonar_experiment<T: Real>(data: &LabeledDataset<T>, cfg: &SonarConfig<T>) -> Result<ResultTable> {
    Ok(sonar_experiment_with_selection(data, cfg)?.0)
}

pub fn sonar_experiment_with_selection<T: Real>(
    data: &LabeledDataset<T>,
    cfg: &SonarConfig<T>,
) -> Result<(ResultTable, Vec<SonarSelection>)> {
    cfg.validate()?;
    let k = data.class_names.len();
    let counts = data.class_counts();
    if k < 2 || counts.iter().any(|&c| c <= data.dim() + 1) {
        return Err(Error::DataShapeMismatch(format!(
            "need at least two classes with more than {} observations each, got counts {counts:?}",
            data.dim() + 1
        )));
    }
    let n = data.n();
    let samples = SampleSet::new(data.features.clone())?;
    let class_idx: Vec<Vec<usize>> = (0..k).map(|c| data.class_indices(c)).collect();
    let full: Vec<ClassFits<T>> = with_thread_cap(|| {
        (0..k)
            .into_par_iter()
            .map(|c| fit_class(&samples.select(&class_idx[c]), cfg, cfg.seed.wrapping_add((n + c) as u64)))
            .collect::<Result<_>>()
    })?;
    let selection = (0..k)
        .map(|c| SonarSelection {
            class: data.class_names[c].clone(),
            band: full[c].band,
            beta: full[c].beta.as_f64(),
        })
        .collect();

    let mistakes: Vec<[bool; 4]> = with_thread_cap(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let own = data.labels[i];
                let rest: Vec<usize> = class_idx[own].iter().copied().filter(|&j| j != i).collect();
                let held = fit_class(&samples.select(&rest), cfg, cfg.seed.wrapping_add(i as u64))?;
                let x = samples.row(i);
                let mut wrong = [false; 4];
                for (m, w) in wrong.iter_mut().enumerate() {
                    let models = (0..k)
                        .map(|c| {
                            let (fits, count) = if c == own { (&held, rest.len()) } else { (&full[c], counts[c]) };
                            ClassModel::new(fits.mean.clone(), fits.covs[m].clone(), T::from_count(count))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    *w = qda_classify(&models, &x)? != own;
                }
                Ok(wrong)
            })
            .collect::<Result<_>>()
    })?;

    let rows = SONAR_METHODS
        .iter()
        .enumerate()
        .map(|(m, name)| ClassifierRow {
            method: name.to_string(),
            loo_error: mistakes.iter().filter(|w| w[m]).count() as f64 / n as f64,
        })
        .collect();
    Ok((ResultTable::Classification { rows }, selection))
}

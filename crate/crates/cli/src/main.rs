use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use robust_scatter::estimators::{
    fit_chordal_joint_mean, fit_direct_cholesky, fit_fixed_point, fit_graphical_mm, fit_l1_cholesky,
    FitConfig, FitReport, Init,
};
use robust_scatter::experiments::{
    grid_precision, run_synthetic, sonar_experiment_with_selection, toeplitz_banded_precision, ResultTable,
    SonarConfig, SyntheticSpec, DEFAULT_GRID_OFFDIAG,
};
use robust_scatter::io::{load_sonar, read_samples_file, write_samples, PatternSpec, RunConfig};
use robust_scatter::models::{mggd_sample, RhoFamily};
use robust_scatter::selftest;
use robust_scatter::{Error, SpdMatrix};

const SEEDING: &str = "\
Seeding: every random quantity derives from the master seed (--seed).
  sample       draws come from a ChaCha8 stream seeded with the master seed.
  exp1-3       trial t uses seed + t; all sample sizes of a trial share that
               draw (size n takes its first n rows).
  sonar        validation splits for leave-one-out fold i use seed + i; the
               full-class models of class c use seed + 208 + c (208 being the
               number of records).
Results do not depend on the thread count; ROBUST_SCATTER_THREADS caps it.

Exit codes: 0 success, 2 invalid configuration, 3 missing or malformed data,
4 estimator failure, 5 selftest failure, 1 anything else.";

#[derive(Parser)]
#[command(name = "robust-scatter", version, about = "Robust and sparse scatter estimation", after_help = SEEDING)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw generalized Gaussian samples and write them as CSV.
    Sample(SampleArgs),
    /// Fit one estimator to a CSV dataset and print the report as JSON.
    Fit(FitArgs),
    /// Banded Laplace sweep (shape 0.5, p = 10, band 4, Toeplitz 1.0/0.4).
    Exp1(SweepArgs),
    /// The exp1 sweep at shape 0.2.
    Exp2(SweepArgs),
    /// Sweep on a 3x3 grid pattern at shape 0.5.
    Exp3(SweepArgs),
    /// Leave-one-out QDA on the SONAR data with four covariance models.
    Sonar(SonarArgs),
    /// Run the randomized invariant checks.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// True inverse-scatter pattern: full or diagonal (identity scatter),
    /// banded:D (Toeplitz) or grid:RxC.
    #[arg(long, default_value = "diagonal")]
    pattern: String,
    /// Off-diagonal value of the true precision (default 0.4 banded, 0.2 grid).
    #[arg(long)]
    offdiag: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RhoArg {
    Mggd,
    Gaussian,
    Tyler,
    Huber,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    /// Fixed point for the full pattern, MM otherwise.
    Auto,
    FixedPoint,
    Mm,
    Direct,
    L1,
    JointMean,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Identity,
    Sample,
}

#[derive(Args)]
struct FitArgs {
    /// CSV file, one observation per row, no header.
    data: PathBuf,
    #[arg(long, value_enum, default_value = "mggd")]
    rho: RhoArg,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// Huber threshold.
    #[arg(long, default_value_t = 1.0)]
    threshold: f64,
    /// full, diagonal, banded:D, grid:RxC, inline JSON, or a pattern JSON file.
    #[arg(long, default_value = "full")]
    pattern: String,
    #[arg(long, value_enum, default_value = "auto")]
    method: MethodArg,
    /// L1 penalty for --method l1.
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, value_enum, default_value = "identity")]
    init: InitArg,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    /// Comma-separated estimator labels (G, BG, MGGD, BMGGD_identity_init, BMGGD_truth_init).
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SonarArgs {
    /// Path to sonar.all-data (60 features and an M/R label per line).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    splits: usize,
    /// Share of each class used for training in the selection splits.
    #[arg(long, default_value_t = 1.0 / 3.0)]
    train_fraction: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_)
            | Error::InvalidShape(_)
            | Error::InvalidBandwidth { .. }
            | Error::InvalidSize(_)
            | Error::InvalidEdge(..)
            | Error::InvalidPermutation(_)
            | Error::NotDiagonallyDominant { .. }
            | Error::Json(_) => 2,
            Error::Io(_) | Error::Parse { .. } | Error::WrongShape(_) | Error::Csv(_) | Error::DataShapeMismatch(_) => 3,
            Error::NotPositiveDefinite { .. }
            | Error::NotSymmetric
            | Error::DimensionMismatch { .. }
            | Error::InvalidFactor(_)
            | Error::NonChordalPattern
            | Error::NotPerfectOrder
            | Error::DomainError(_)
            | Error::RankDeficientData { .. }
            | Error::DivergedWeights(_)
            | Error::Precondition(_) => 4,
        };
        Failure { code, message: e.to_string() }
    }
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure { code: 2, message: msg.into() }
}

fn data_error(path: &Path, e: Error) -> Failure {
    let mut f = Failure::from(e);
    f.message = format!("{}: {}", path.display(), f.message);
    f
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, bytes).map_err(|e| Failure { code: 1, message: format!("{}: {e}", p.display()) }),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| Failure { code: 1, message: e.to_string() }),
    }
}

fn load_pattern(spec: &str, p: usize) -> Result<robust_scatter::SparsityPattern, Failure> {
    let path = Path::new(spec);
    if path.extension().is_some_and(|e| e == "json") {
        let g = robust_scatter::io::read_pattern_json(path).map_err(|e| data_error(path, e))?;
        if g.p() != p {
            return Err(config_error(format!("pattern has {} vertices but the data have {p} columns", g.p())));
        }
        return Ok(g);
    }
    Ok(PatternSpec::parse(spec)?.build(p)?)
}

fn sample(a: SampleArgs) -> Result<(), Failure> {
    let spec = PatternSpec::parse(&a.pattern)?;
    let truth = match spec {
        PatternSpec::Full | PatternSpec::Diagonal => SpdMatrix::identity(a.p),
        PatternSpec::Banded(d) => toeplitz_banded_precision(a.p, d, 1.0, a.offdiag.unwrap_or(0.4))?.scatter,
        PatternSpec::Grid([r, c]) => {
            if r * c != a.p {
                return Err(config_error(format!("grid {r}x{c} does not have p = {} vertices", a.p)));
            }
            grid_precision(r, c, a.offdiag.unwrap_or(DEFAULT_GRID_OFFDIAG))?.scatter
        }
        PatternSpec::Edges(_) => return Err(config_error("sample supports full, diagonal, banded and grid truths")),
    };
    let data = mggd_sample(a.n, &DVector::zeros(a.p), &truth, a.beta, a.seed)?;
    let mut buf = Vec::new();
    write_samples(&data, &mut buf)?;
    emit(a.out.as_deref(), &buf)
}

fn fit(a: FitArgs) -> Result<(), Failure> {
    let data = read_samples_file::<f64>(&a.data).map_err(|e| data_error(&a.data, e))?;
    let p = data.p();
    let g = load_pattern(&a.pattern, p)?;
    let rho = match a.rho {
        RhoArg::Mggd => RhoFamily::mggd(a.beta)?,
        RhoArg::Gaussian => RhoFamily::gaussian(),
        RhoArg::Tyler => RhoFamily::tyler(p)?,
        RhoArg::Huber => RhoFamily::huber(a.threshold)?,
    };
    let mut cfg = FitConfig::default().with_init(match a.init {
        InitArg::Identity => Init::Identity,
        InitArg::Sample => Init::SampleCovariance,
    });
    if let Some(m) = a.max_iter {
        cfg = cfg.with_max_iter(m);
    }
    if let Some(t) = a.rel_tol {
        cfg = cfg.with_rel_tol(t);
    }
    cfg.validate()?;
    let mut mean = None;
    let report: FitReport<f64> = match a.method {
        MethodArg::Auto if g.is_complete() => fit_fixed_point(&data, &rho, &cfg)?,
        MethodArg::Auto | MethodArg::Mm => fit_graphical_mm(&data, &rho, &g, &cfg)?,
        MethodArg::FixedPoint => {
            if !g.is_complete() {
                return Err(config_error("--method fixed-point needs --pattern full"));
            }
            fit_fixed_point(&data, &rho, &cfg)?
        }
        MethodArg::Direct => fit_direct_cholesky(&data, &rho, &g, &cfg)?,
        MethodArg::L1 => fit_l1_cholesky(&data, &rho, a.lambda, &cfg)?,
        MethodArg::JointMean => {
            let (r, mu) = fit_chordal_joint_mean(&data, &rho, &g, &cfg)?;
            mean = Some(mu);
            r
        }
    };
    let mut json: serde_json::Value = serde_json::from_str(&report.to_json()?).map_err(Error::from)?;
    if let (Some(mu), Some(obj)) = (mean, json.as_object_mut()) {
        obj.insert("mean".into(), serde_json::json!(mu.as_slice()));
    }
    let mut text = serde_json::to_string_pretty(&json).map_err(Error::from)?;
    text.push('\n');
    emit(a.out.as_deref(), text.as_bytes())
}

#[derive(Clone, Copy)]
enum Sweep {
    One,
    Two,
    Three,
}

fn sweep(which: Sweep, a: SweepArgs) -> Result<(), Failure> {
    let file = match &a.config {
        Some(p) => RunConfig::from_path(p).map_err(|e| match e {
            Error::Io(_) => data_error(p, e),
            other => other.into(),
        })?,
        None => RunConfig::default(),
    };
    let flags = RunConfig {
        beta: a.beta,
        trials: a.trials,
        seed: a.seed,
        n_grid: a.n_grid,
        estimators: a.estimators,
        max_iter: a.max_iter,
        output: a.out,
        ..Default::default()
    };
    flags.validate()?;
    let cfg = file.overlay(flags);
    if cfg.data.is_some() {
        return Err(config_error("synthetic sweeps take no data file"));
    }
    let (default_beta, default_pattern, default_trials) = match which {
        Sweep::One => (0.5, PatternSpec::Banded(4), 500),
        Sweep::Two => (0.2, PatternSpec::Banded(4), 500),
        Sweep::Three => (0.5, PatternSpec::Grid([3, 3]), 100),
    };
    let pattern = cfg.pattern.clone().unwrap_or(default_pattern);
    let (p, truth) = match &pattern {
        PatternSpec::Banded(d) => {
            let p = cfg.p.unwrap_or(10);
            (p, toeplitz_banded_precision(p, *d, 1.0, 0.4)?.scatter)
        }
        PatternSpec::Grid([r, c]) => {
            if cfg.p.is_some_and(|p| p != r * c) {
                return Err(config_error("p does not match the grid size"));
            }
            (r * c, grid_precision(*r, *c, DEFAULT_GRID_OFFDIAG)?.scatter)
        }
        _ => return Err(config_error("sweeps support banded and grid patterns")),
    };
    let mut spec = SyntheticSpec::new(
        cfg.beta.unwrap_or(default_beta),
        pattern.build(p)?,
        truth,
        cfg.n_grid.clone().unwrap_or_else(|| vec![20, 40, 60, 80, 100]),
        cfg.trials.unwrap_or(default_trials),
        cfg.seed.unwrap_or(1),
    );
    if let Some(e) = cfg.estimator_kinds() {
        spec.estimators = e;
    }
    if let Some(m) = cfg.max_iter {
        spec.fit = spec.fit.with_max_iter(m);
    }
    if let Some(t) = cfg.rel_tol {
        spec.fit = spec.fit.with_rel_tol(t);
    }
    let table = run_synthetic(&spec)?;
    if let ResultTable::Synthetic { failures, init_gaps, .. } = &table {
        for f in failures {
            eprintln!("trial {} n={} {}: {}", f.trial, f.n, f.estimator, f.message);
        }
        for g in init_gaps {
            eprintln!(
                "n={}: identity vs truth init, max relative gap {:.3e}, mean {:.3e} over {} trials",
                g.n, g.max, g.mean, g.trials
            );
        }
    }
    let labels: Vec<&str> = spec.estimators.iter().map(|e| e.label()).collect();
    log::info!("estimators: {}", labels.join(", "));
    emit(cfg.output.as_deref(), table.to_csv_string()?.as_bytes())
}

fn sonar(a: SonarArgs) -> Result<(), Failure> {
    let data = load_sonar::<f64>(&a.data).map_err(|e| data_error(&a.data, e))?;
    let cfg = SonarConfig {
        seed: a.seed,
        splits: a.splits,
        train_fraction: a.train_fraction,
        ..Default::default()
    };
    let (table, selection) = sonar_experiment_with_selection(&data, &cfg)?;
    for s in &selection {
        eprintln!("{}: band {}, beta {}", s.class, s.band, s.beta);
    }
    emit(a.out.as_deref(), table.to_csv_string()?.as_bytes())
}

fn run_selftest(a: SelftestArgs) -> Result<(), Failure> {
    let checks = selftest::run_all(a.seed);
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure { code: 5, message: format!("{failed} selftest checks failed") });
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sample(a) => sample(a),
        Command::Fit(a) => fit(a),
        Command::Exp1(a) => sweep(Sweep::One, a),
        Command::Exp2(a) => sweep(Sweep::Two, a),
        Command::Exp3(a) => sweep(Sweep::Three, a),
        Command::Sonar(a) => sonar(a),
        Command::Selftest(a) => run_selftest(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

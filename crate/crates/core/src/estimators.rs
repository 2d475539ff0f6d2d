//! Scatter estimators: the unconstrained reweighting fixed point, the
//! majorization-minimization scheme under a sparsity pattern (closed form
//! inner step for chordal patterns, masked gradient descent otherwise), a
//! direct first-order solver on the Cholesky parameterization, L1-penalized
//! structure learning and joint location/scatter estimation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{find_perfect_elimination_order, is_perfect_elimination_order, permute_pattern, EliminationOrder, SparsityPattern};
use crate::models::{cholesky_objective, neg_log_likelihood, projected_norms, RhoFunction, SampleSet};
use crate::scalar::Real;
use crate::spd::{cholesky_dense, relative_frobenius, LowerFactor, SpdMatrix};

/// Smallest value a diagonal entry of a Cholesky iterate may take.
pub const DIAG_FLOOR: f64 = 1e-10;

/// Masked-gradient stopping threshold of the general GGM solver, per sample.
pub const GGM_GRAD_TOL: f64 = 1e-7;

/// Gradient stopping threshold of the direct Cholesky solvers, per sample.
pub const CHOLESKY_GRAD_TOL: f64 = 1e-9;

const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub enum Init<T: Real> {
    Identity,
    Given(SpdMatrix<T>),
    SampleCovariance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig<T: Real> {
    /// Outer iterations (reweighting sweeps).
    pub max_iter: usize,
    /// Stop when `‖Σ_{m+1} − Σ_m‖_F / ‖Σ_m‖_F` drops below this.
    pub rel_tol: T,
    /// Lower clamp on quadratic forms before they are fed to `u`.
    pub quad_clamp: T,
    pub init: Init<T>,
    /// Iteration cap of the first-order solvers.
    pub inner_max_iter: usize,
}

impl<T: Real> Default for FitConfig<T> {
    fn default() -> Self {
        Self {
            max_iter: 30,
            rel_tol: T::lit(1e-8),
            quad_clamp: T::lit(1e-12),
            init: Init::Identity,
            inner_max_iter: 20_000,
        }
    }
}

impl<T: Real> FitConfig<T> {
    pub fn with_init(mut self, init: Init<T>) -> Self {
        self.init = init;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_rel_tol(mut self, rel_tol: T) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || self.inner_max_iter == 0 {
            return Err(Error::Config("iteration limits must be at least 1".into()));
        }
        if !(self.rel_tol > T::zero()) {
            return Err(Error::Config("rel_tol must be positive".into()));
        }
        if !(self.quad_clamp >= T::zero()) {
            return Err(Error::Config("quad_clamp must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Result of any fit. The trace holds the objective at the initial point
/// followed by one entry per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport<T: Real> {
    pub scatter: SpdMatrix<T>,
    pub factor: Option<LowerFactor<T>>,
    pub objective_trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct FitReportJson {
    p: usize,
    scatter: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    factor: Option<Vec<f64>>,
    objective_trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn row_major<T: Real>(m: &DMatrix<T>) -> Vec<f64> {
    (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)].as_f64()))
        .collect()
}

impl<T: Real> FitReport<T> {
    /// JSON with the scatter (and factor, when present) as flat row-major
    /// arrays of length `p²`.
    pub fn to_json(&self) -> Result<String> {
        let j = FitReportJson {
            p: self.scatter.dim(),
            scatter: row_major(self.scatter.as_matrix()),
            factor: self.factor.as_ref().map(|c| row_major(c.entries())),
            objective_trace: self.objective_trace.iter().map(|x| x.as_f64()).collect(),
            iterations: self.iterations,
            converged: self.converged,
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn final_objective(&self) -> T {
        *self.objective_trace.last().expect("trace holds the initial objective")
    }

    /// True when no step increases the objective by more than `slack`.
    pub fn is_non_increasing(&self, slack: T) -> bool {
        self.objective_trace.windows(2).all(|w| w[1] <= w[0] + slack)
    }
}

/// Reads the scatter matrix back from a report produced by [`FitReport::to_json`].
pub fn scatter_from_report_json(s: &str) -> Result<SpdMatrix<f64>> {
    let j: FitReportJson = serde_json::from_str(s)?;
    if j.scatter.len() != j.p * j.p {
        return Err(Error::WrongShape(format!("scatter has {} entries for p = {}", j.scatter.len(), j.p)));
    }
    SpdMatrix::new(DMatrix::from_row_slice(j.p, j.p, &j.scatter))
}

/// Per-observation weights `αᵢ ≥ 0` of a weighted Gaussian subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector<T: Real>(Vec<T>);

impl<T: Real> WeightVector<T> {
    pub fn new(alpha: Vec<T>) -> Result<Self> {
        if let Some(i) = alpha.iter().position(|a| !a.is_finite() || *a < T::zero()) {
            return Err(Error::DivergedWeights(i));
        }
        Ok(Self(alpha))
    }

    pub fn constant(n: usize, value: T) -> Self {
        Self(vec![value; n])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Drops observations at the origin when `ρ` is undefined there.
fn usable_data<T: Real>(data: &SampleSet<T>, f: &dyn RhoFunction<T>) -> SampleSet<T> {
    if f.finite_at_zero() {
        return data.clone();
    }
    let keep: Vec<usize> = (0..data.n())
        .filter(|&i| data.rows().row(i).iter().any(|x| *x != T::zero()))
        .collect();
    if keep.len() < data.n() {
        log::warn!("dropping {} observation(s) at the origin for {}", data.n() - keep.len(), f.label());
        data.select(&keep)
    } else {
        data.clone()
    }
}

fn weights_from_forms<T: Real>(q: &[T], f: &dyn RhoFunction<T>, clamp: T) -> Result<Vec<T>> {
    q.iter()
        .enumerate()
        .map(|(i, &x)| {
            let w = f.weight(x.max(clamp));
            if w.is_finite() && w >= T::zero() {
                Ok(w)
            } else {
                Err(Error::DivergedWeights(i))
            }
        })
        .collect()
}

fn initial_scatter<T: Real>(data: &SampleSet<T>, init: &Init<T>) -> Result<SpdMatrix<T>> {
    let p = data.p();
    match init {
        Init::Identity => Ok(SpdMatrix::identity(p)),
        Init::Given(s) if s.dim() == p => Ok(s.clone()),
        Init::Given(s) => Err(Error::DimensionMismatch { expected: p, got: s.dim() }),
        Init::SampleCovariance => SpdMatrix::from_computed(data.second_moment())
            .map_err(|_| Error::RankDeficientData { n: data.n(), p }),
    }
}

fn normalize_trace<T: Real>(s: SpdMatrix<T>) -> Result<SpdMatrix<T>> {
    let c = T::from_count(s.dim()) / s.trace();
    s.scaled(c)
}

/// Iterates `Σ ← (2/n) Σᵢ u(zᵢᵀ Σ⁻¹ zᵢ) zᵢ zᵢᵀ`. For scale-invariant losses
/// (Tyler) every iterate is rescaled to trace `p`.
pub fn fit_fixed_point<T: Real>(data: &SampleSet<T>, f: &dyn RhoFunction<T>, cfg: &FitConfig<T>) -> Result<FitReport<T>> {
    cfg.validate()?;
    let data = usable_data(data, f);
    let (n, p) = (data.n(), data.p());
    if !data.spans_space() {
        return Err(Error::RankDeficientData { n, p });
    }
    let two_over_n = T::lit(2.0) / T::from_count(n);
    let mut sigma = initial_scatter(&data, &cfg.init)?;
    if f.scale_invariant() {
        sigma = normalize_trace(sigma)?;
    }
    let mut trace = vec![neg_log_likelihood(&sigma, &data, f)?];
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iter {
        let q = sigma.inverse_quadratic_forms(data.rows())?;
        let w = weights_from_forms(&q, f, cfg.quad_clamp)?;
        let mut next = SpdMatrix::from_computed(data.weighted_scatter(&w) * two_over_n)
            .map_err(|_| Error::RankDeficientData { n, p })?;
        if f.scale_invariant() {
            next = normalize_trace(next)?;
        }
        let change = relative_frobenius(next.as_matrix(), sigma.as_matrix());
        trace.push(neg_log_likelihood(&next, &data, f)?);
        sigma = next;
        iterations = it;
        if change < cfg.rel_tol {
            converged = true;
            break;
        }
    }
    Ok(FitReport {
        scatter: sigma,
        factor: None,
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// Least-squares coefficients of `y` on the columns of `x`, via the normal
/// equations with one step of iterative refinement. `None` when the Gram
/// matrix is singular.
fn regress<T: Real>(x: &DMatrix<T>, y: &DVector<T>) -> Option<(DVector<T>, T)> {
    let gram = x.transpose() * x;
    let l = cholesky_dense(&gram).ok()?.into_entries();
    let solve = |rhs: &DVector<T>| -> Option<DVector<T>> {
        let t = l.solve_lower_triangular(rhs)?;
        l.transpose().solve_upper_triangular(&t)
    };
    let mut b = solve(&(x.transpose() * y))?;
    let r = y - x * &b;
    b += solve(&(x.transpose() * &r))?;
    let rss = (y - x * &b).norm_squared();
    Some((b, rss))
}

/// Closed-form minimizer of `Σᵢ αᵢ ‖Cᵀzᵢ‖² − n Σⱼ log Cⱼⱼ` over G-sparse
/// lower-triangular `C`, column by column: regress the weighted column `j` on
/// its later neighbours, then `Cⱼⱼ = √(n / (2 RSSⱼ))` and the off-diagonal
/// entries are `−Cⱼⱼ` times the regression coefficients.
///
/// The natural order must be a perfect elimination order of `g`.
pub fn solve_weighted_chordal_ggm<T: Real>(
    data: &SampleSet<T>,
    w: &WeightVector<T>,
    g: &SparsityPattern,
) -> Result<LowerFactor<T>> {
    let (n, p) = (data.n(), data.p());
    if g.p() != p {
        return Err(Error::DimensionMismatch { expected: p, got: g.p() });
    }
    if w.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: w.len() });
    }
    if !is_perfect_elimination_order(g, &EliminationOrder::natural(p)) {
        return Err(Error::NotPerfectOrder);
    }
    let mut wz = data.rows().clone();
    for (i, mut r) in wz.row_iter_mut().enumerate() {
        r *= w.as_slice()[i].sqrt();
    }
    let nf = T::from_count(n);
    let two = T::lit(2.0);
    let mut c = DMatrix::<T>::zeros(p, p);
    for j in 0..p {
        let later: Vec<usize> = g.later_neighbors(j).collect();
        let y = wz.column(j).into_owned();
        let (coef, rss) = if later.is_empty() {
            (DVector::zeros(0), y.norm_squared())
        } else {
            let x = wz.select_columns(&later);
            regress(&x, &y).ok_or(Error::RankDeficientData { n, p })?
        };
        if !(rss > T::eps() * y.norm_squared()) || !rss.is_finite() {
            return Err(Error::RankDeficientData { n, p });
        }
        let cjj = (nf / (two * rss)).sqrt();
        c[(j, j)] = cjj;
        for (k, &row) in later.iter().enumerate() {
            c[(row, j)] = -cjj * coef[k];
        }
    }
    Ok(LowerFactor::from_parts_unchecked(c, Some(g.clone())))
}

/// Solution of the general-pattern weighted Gaussian problem.
#[derive(Debug, Clone, PartialEq)]
pub struct GgmSolution<T: Real> {
    pub scatter: SpdMatrix<T>,
    /// G-sparse concentration `K = Σ⁻¹`; entries outside the pattern are exactly zero.
    pub concentration: SpdMatrix<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Max-norm of the masked gradient divided by `n` at the returned point.
    pub gradient_norm: T,
}

fn mask<T: Real>(m: &mut DMatrix<T>, g: &SparsityPattern) {
    let p = m.nrows();
    for i in 0..p {
        for j in 0..p {
            if !g.allows(i, j) {
                m[(i, j)] = T::zero();
            }
        }
    }
}

fn frob_dot<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Minimizes `tr(K M) − (n/2) log det K` over G-sparse positive definite `K`,
/// with `M = Σᵢ αᵢ zᵢ zᵢᵀ`, by gradient descent on the free entries. Steps
/// are Barzilai-Borwein proposals shortened by backtracking until the
/// iterate stays positive definite and the Armijo condition holds.
pub fn solve_weighted_ggm_general<T: Real>(
    data: &SampleSet<T>,
    w: &WeightVector<T>,
    g: &SparsityPattern,
    cfg: &FitConfig<T>,
) -> Result<GgmSolution<T>> {
    cfg.validate()?;
    let (n, p) = (data.n(), data.p());
    if g.p() != p {
        return Err(Error::DimensionMismatch { expected: p, got: g.p() });
    }
    if w.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: w.len() });
    }
    // work with the per-sample objective tr(K S) − ½ log det K
    let s = data.weighted_scatter(w.as_slice()) / T::from_count(n);
    if (0..p).any(|j| !(s[(j, j)] > T::zero())) {
        return Err(Error::RankDeficientData { n, p });
    }
    let half = T::lit(0.5);
    let objective = |k: &DMatrix<T>| -> Option<(T, DMatrix<T>)> {
        let spd = SpdMatrix::from_computed(k.clone()).ok()?;
        let inv = spd.inverse().ok()?;
        Some((frob_dot(k, &s) - half * spd.log_det().ok()?, inv.into_matrix()))
    };
    let gradient = |kinv: &DMatrix<T>| -> DMatrix<T> {
        let mut gm = &s - kinv * half;
        mask(&mut gm, g);
        gm
    };

    let mut k = DMatrix::<T>::from_diagonal(&DVector::from_fn(p, |j, _| half / s[(j, j)]));
    let (mut fk, mut kinv) = objective(&k).ok_or(Error::RankDeficientData { n, p })?;
    let mut grad = gradient(&kinv);
    let tol = T::lit(GGM_GRAD_TOL);
    let mut step = T::one();
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..cfg.inner_max_iter {
        if grad.amax() < tol {
            converged = true;
            break;
        }
        iterations = it + 1;
        let gg = grad.norm_squared();
        let mut t = step;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &k - &grad * t;
            if let Some((fc, cinv)) = objective(&cand) {
                if fc <= fk - T::lit(ARMIJO) * t * gg {
                    accepted = Some((cand, fc, cinv));
                    break;
                }
            }
            t *= half;
        }
        let Some((next, fnext, next_inv)) = accepted else {
            break;
        };
        let next_grad = gradient(&next_inv);
        let dk = &next - &k;
        let dg = &next_grad - &grad;
        let curv = frob_dot(&dk, &dg);
        step = if curv > T::zero() { dk.norm_squared() / curv } else { t * T::lit(2.0) };
        k = next;
        fk = fnext;
        kinv = next_inv;
        grad = next_grad;
    }
    if !converged {
        converged = grad.amax() < tol;
    }
    let gradient_norm = grad.amax();
    if !converged {
        log::warn!("general GGM solver stopped at gradient {gradient_norm} after {iterations} iterations");
    }
    Ok(GgmSolution {
        scatter: SpdMatrix::from_computed(kinv)?,
        concentration: SpdMatrix::from_computed(k)?,
        iterations,
        converged,
        gradient_norm,
    })
}

/// Inner solver of one majorization step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InnerSolver {
    Chordal,
    General,
}

/// Shared reweighting loop: `Σ_{m+1}` solves the weighted Gaussian problem
/// with weights `u(zᵢᵀ Σ_m⁻¹ zᵢ)` under the pattern.
fn mm_loop<T: Real>(
    data: &SampleSet<T>,
    f: &dyn RhoFunction<T>,
    g: &SparsityPattern,
    cfg: &FitConfig<T>,
    init: SpdMatrix<T>,
    solver: InnerSolver,
) -> Result<FitReport<T>> {
    let mut sigma = if f.scale_invariant() { normalize_trace(init)? } else { init };
    let mut factor: Option<LowerFactor<T>> = None;
    let mut trace = vec![neg_log_likelihood(&sigma, data, f)?];
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iter {
        let q = match &factor {
            Some(c) => projected_norms(c.entries(), data.rows()),
            None => sigma.inverse_quadratic_forms(data.rows())?,
        };
        let w = WeightVector::new(weights_from_forms(&q, f, cfg.quad_clamp)?)?;
        let (mut next, mut c) = match solver {
            InnerSolver::Chordal => {
                let c = solve_weighted_chordal_ggm(data, &w, g)?;
                (c.inverse_gram()?, Some(c))
            }
            InnerSolver::General => (solve_weighted_ggm_general(data, &w, g, cfg)?.scatter, None),
        };
        if f.scale_invariant() {
            let scale = T::from_count(next.dim()) / next.trace();
            next = next.scaled(scale)?;
            c = c.map(|c| {
                let e = c.entries() / scale.sqrt();
                LowerFactor::from_parts_unchecked(e, c.pattern().cloned())
            });
        }
        let change = relative_frobenius(next.as_matrix(), sigma.as_matrix());
        trace.push(match &c {
            Some(c) => cholesky_objective(c, data, f)?,
            None => neg_log_likelihood(&next, data, f)?,
        });
        sigma = next;
        factor = c;
        iterations = it;
        if change < cfg.rel_tol {
            converged = true;
            break;
        }
    }
    Ok(FitReport {
        scatter: sigma,
        factor,
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// Relabels a chordal problem so the natural order is perfect. `None` when
/// it already is.
fn perfect_relabeling(g: &SparsityPattern) -> Result<Option<EliminationOrder>> {
    if is_perfect_elimination_order(g, &EliminationOrder::natural(g.p())) {
        return Ok(None);
    }
    find_perfect_elimination_order(g).map(Some).ok_or(Error::NonChordalPattern)
}

fn permuted_init<T: Real>(init: &Init<T>, ord: &EliminationOrder) -> Init<T> {
    match init {
        Init::Given(s) => Init::Given(SpdMatrix::from_computed(ord.permute_symmetric(s.as_matrix())).expect("permutation keeps definiteness")),
        other => other.clone(),
    }
}

/// Majorization-minimization under a chordal pattern with the closed-form
/// inner step. When the natural order is not perfect the problem is solved
/// in a perfect order and mapped back; `factor` is then omitted.
pub fn fit_chordal_mm<T: Real>(
    data: &SampleSet<T>,
    f: &dyn RhoFunction<T>,
    g: &SparsityPattern,
    cfg: &FitConfig<T>,
) -> Result<FitReport<T>> {
    cfg.validate()?;
    if g.p() != data.p() {
        return Err(Error::DimensionMismatch { expected: data.p(), got: g.p() });
    }
    let data = usable_data(data, f);
    match perfect_relabeling(g)? {
        None => {
            let init = initial_scatter(&data, &cfg.init)?;
            mm_loop(&data, f, g, cfg, init, InnerSolver::Chordal)
        }
        Some(ord) => {
            let pdata = SampleSet::new(ord.permute_columns(data.rows()))?;
            let pg = permute_pattern(g, &ord)?;
            let init = initial_scatter(&pdata, &permuted_init(&cfg.init, &ord))?;
            let mut report = mm_loop(&pdata, f, &pg, cfg, init, InnerSolver::Chordal)?;
            report.scatter = SpdMatrix::from_computed(ord.unpermute_symmetric(report.scatter.as_matrix()))?;
            report.factor = None;
            Ok(report)
        }
    }
}

/// Majorization-minimization under any pattern: chordal patterns use the
/// closed-form inner step, others the masked-gradient solver.
pub fn fit_graphical_mm<T: Real>(
    data: &SampleSet<T>,
    f: &dyn RhoFunction<T>,
    g: &SparsityPattern,
    cfg: &FitConfig<T>,
) -> Result<FitReport<T>> {
    if find_perfect_elimination_order(g).is_some() {
        return fit_chordal_mm(data, f, g, cfg);
    }
    cfg.validate()?;
    if g.p() != data.p() {
        return Err(Error::DimensionMismatch { expected: data.p(), got: g.p() });
    }
    let data = usable_data(data, f);
    let init = initial_scatter(&data, &cfg.init)?;
    mm_loop(&data, f, g, cfg, init, InnerSolver::General)
}

/// Gaussian (β = 1) maximum likelihood scatter under a pattern.
pub fn gaussian_pattern_mle<T: Real>(data: &SampleSet<T>, g: &SparsityPattern, cfg: &FitConfig<T>) -> Result<SpdMatrix<T>> {
    let w = WeightVector::constant(data.n(), T::lit(0.5));
    match perfect_relabeling(g) {
        Ok(None) => solve_weighted_chordal_ggm(data, &w, g)?.inverse_gram(),
        Ok(Some(ord)) => {
            let pdata = SampleSet::new(ord.permute_columns(data.rows()))?;
            let s = solve_weighted_chordal_ggm(&pdata, &w, &permute_pattern(g, &ord)?)?.inverse_gram()?;
            SpdMatrix::from_computed(ord.unpermute_symmetric(s.as_matrix()))
        }
        Err(_) => Ok(solve_weighted_ggm_general(data, &w, g, cfg)?.scatter),
    }
}

/// Pattern-masked gradient of the likelihood with respect to the
/// concentration `K = Σ⁻¹`: `Σᵢ u(qᵢ) zᵢ zᵢᵀ − (n/2) Σ`.
pub fn concentration_gradient<T: Real>(
    scatter: &SpdMatrix<T>,
    data: &SampleSet<T>,
    f: &dyn RhoFunction<T>,
    g: &SparsityPattern,
    quad_clamp: T,
) -> Result<DMatrix<T>> {
    let q = scatter.inverse_quadratic_forms(data.rows())?;
    let w = weights_from_forms(&q, f, quad_clamp)?;
    let mut grad = data.weighted_scatter(&w) - scatter.as_matrix() * (T::from_count(data.n()) * T::lit(0.5));
    mask(&mut grad, g);
    Ok(grad)
}

/// Gradient of `Σᵢ ρ(‖Cᵀzᵢ‖²) − n Σ log Cⱼⱼ`, restricted to the lower
/// triangle entries allowed by `g` (`None`: full lower triangle).
fn cholesky_gradient<T: Real>(
    c: &DMatrix<T>,
    rows: &DMatrix<T>,
    f: &dyn RhoFunction<T>,
    g: Option<&SparsityPattern>,
    clamp: T,
) -> Result<DMatrix<T>> {
    let p = c.nrows();
    let v = rows * c;
    let q: Vec<T> = v.row_iter().map(|r| r.norm_squared()).collect();
    let w = weights_from_forms(&q, f, clamp)?;
    let mut wv = v;
    for (i, mut r) in wv.row_iter_mut().enumerate() {
        r *= w[i] * T::lit(2.0);
    }
    let mut grad = rows.transpose() * wv;
    let n = T::from_count(rows.nrows());
    for j in 0..p {
        grad[(j, j)] -= n / c[(j, j)];
        for i in 0..j {
            grad[(i, j)] = T::zero();
        }
        if let Some(g) = g {
            for i in (j + 1)..p {
                if !g.has_edge(i, j) {
                    grad[(i, j)] = T::zero();
                }
            }
        }
    }
    Ok(grad)
}

fn smooth_cholesky_objective<T: Real>(c: &DMatrix<T>, rows: &DMatrix<T>, f: &dyn RhoFunction<T>) -> Option<T> {
    let p = c.nrows();
    if (0..p).any(|j| !(c[(j, j)] > T::zero())) {
        return None;
    }
    let q = projected_norms(c, rows);
    let mut acc = T::zero();
    for x in q {
        acc += f.rho(x);
    }
    let logs = (0..p).fold(T::zero(), |a, j| a + c[(j, j)].ln());
    let val = acc - T::from_count(rows.nrows()) * logs;
    val.is_finite().then_some(val)
}

fn project_diagonal<T: Real>(c: &mut DMatrix<T>) {
    let floor = T::lit(DIAG_FLOOR);
    for j in 0..c.nrows() {
        if c[(j, j)] < floor {
            c[(j, j)] = floor;
        }
    }
}

/// Diagonal Gaussian starting factor `Cⱼⱼ = √(n / (2 Σᵢ zᵢⱼ²))`.
fn diagonal_start<T: Real>(rows: &DMatrix<T>) -> Result<DMatrix<T>> {
    let (n, p) = (rows.nrows(), rows.ncols());
    let nf = T::from_count(n);
    let mut c = DMatrix::zeros(p, p);
    for j in 0..p {
        let ss = rows.column(j).norm_squared();
        if !(ss > T::zero()) {
            return Err(Error::RankDeficientData { n, p });
        }
        c[(j, j)] = (nf / (T::lit(2.0) * ss)).sqrt();
    }
    Ok(c)
}

/// Minimizes the Cholesky-parameterized objective over G-sparse factors by
/// projected gradient descent (Barzilai-Borwein steps with backtracking,
/// diagonal projected to at least [`DIAG_FLOOR`]). Requires `ρ(x²)` convex
/// and the natural order to be perfect for `g`.
pub fn fit_direct_cholesky<T: Real>(
    data: &SampleSet<T>,
    f: &dyn RhoFunction<T>,
    g: &SparsityPattern,
    cfg: &FitConfig<T>,
) -> Result<FitReport<T>> {
    cfg.validate()?;
    if !f.rho_sq_convex() {
        return Err(Error::Precondition(format!("{} does not make rho(x^2) convex", f.label())));
    }
    let (n, p) = (data.n(), data.p());
    if g.p() != p {
        return Err(Error::DimensionMismatch { expected: p, got: g.p() });
    }
    if !is_perfect_elimination_order(g, &EliminationOrder::natural(p)) {
        return Err(Error::NotPerfectOrder);
    }
    let data = usable_data(data, f);
    let rows = data.rows();
    let mut c = diagonal_start(rows)?;
    let mut fc = smooth_cholesky_objective(&c, rows, f).ok_or(Error::RankDeficientData { n, p })?;
    let mut grad = cholesky_gradient(&c, rows, f, Some(g), cfg.quad_clamp)?;
    let tol = T::lit(CHOLESKY_GRAD_TOL) * T::from_count(n);
    let mut trace = vec![fc];
    let mut step = T::one() / T::from_count(n);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..cfg.inner_max_iter {
        if grad.amax() < tol {
            converged = true;
            break;
        }
        iterations = it + 1;
        let mut t = step;
        let mut accepted = None;
        for _ in 0..80 {
            let mut cand = &c - &grad * t;
            project_diagonal(&mut cand);
            if let Some(fnew) = smooth_cholesky_objective(&cand, rows, f) {
                let decrease = frob_dot(&grad, &(&cand - &c));
                if fnew <= fc + T::lit(ARMIJO) * decrease {
                    accepted = Some((cand, fnew));
                    break;
                }
            }
            t *= T::lit(0.5);
        }
        let Some((next, fnext)) = accepted else {
            break;
        };
        let next_grad = cholesky_gradient(&next, rows, f, Some(g), cfg.quad_clamp)?;
        let dc = &next - &c;
        let dg = &next_grad - &grad;
        let curv = frob_dot(&dc, &dg);
        step = if curv > T::zero() { dc.norm_squared() / curv } else { t * T::lit(2.0) };
        c = next;
        fc = fnext;
        grad = next_grad;
        trace.push(fc);
    }
    let factor = LowerFactor::new(c, Some(g.clone()))?;
    Ok(FitReport {
        scatter: factor.inverse_gram()?,
        factor: Some(factor),
        objective_trace: trace,
        iterations,
        converged,
    })
}

fn soft_threshold<T: Real>(x: T, t: T) -> T {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        T::zero()
    }
}

/// L1-penalized Cholesky objective over full lower-triangular factors in the
/// natural variable order, solved by proximal gradient: gradient step on the
/// smooth part, soft-thresholding of every entry, diagonal re-projected to
/// stay positive. The trace records the penalized objective.
pub fn fit_l1_cholesky<T: Real>(
    data: &SampleSet<T>,
    f: &dyn RhoFunction<T>,
    lambda: T,
    cfg: &FitConfig<T>,
) -> Result<FitReport<T>> {
    cfg.validate()?;
    if !f.rho_sq_convex() {
        return Err(Error::Precondition(format!("{} does not make rho(x^2) convex", f.label())));
    }
    if !(lambda >= T::zero()) {
        return Err(Error::Config("lambda must be nonnegative".into()));
    }
    let data = usable_data(data, f);
    let (n, p) = (data.n(), data.p());
    let rows = data.rows();
    let l1 = |c: &DMatrix<T>| c.iter().fold(T::zero(), |a, x| a + x.abs()) * lambda;
    let mut c = diagonal_start(rows)?;
    let mut fs = smooth_cholesky_objective(&c, rows, f).ok_or(Error::RankDeficientData { n, p })?;
    let mut grad = cholesky_gradient(&c, rows, f, None, cfg.quad_clamp)?;
    let mut trace = vec![fs + l1(&c)];
    let mut step = T::one() / T::from_count(n);
    let tol = T::lit(CHOLESKY_GRAD_TOL) * T::from_count(n);
    let mut converged = false;
    let mut iterations = 0;
    let half = T::lit(0.5);
    for it in 0..cfg.inner_max_iter {
        iterations = it + 1;
        let mut t = step;
        let mut accepted = None;
        for _ in 0..80 {
            let mut cand = &c - &grad * t;
            for j in 0..p {
                for i in j..p {
                    cand[(i, j)] = soft_threshold(cand[(i, j)], t * lambda);
                }
            }
            project_diagonal(&mut cand);
            if let Some(fnew) = smooth_cholesky_objective(&cand, rows, f) {
                let d = &cand - &c;
                if fnew <= fs + frob_dot(&grad, &d) + d.norm_squared() * half / t {
                    accepted = Some((cand, fnew, t));
                    break;
                }
            }
            t *= half;
        }
        let Some((next, fnext, t_used)) = accepted else {
            break;
        };
        let mapping = (&c - &next).amax() / t_used;
        let next_grad = cholesky_gradient(&next, rows, f, None, cfg.quad_clamp)?;
        let dc = &next - &c;
        let dg = &next_grad - &grad;
        let curv = frob_dot(&dc, &dg);
        step = if curv > T::zero() { dc.norm_squared() / curv } else { t_used * T::lit(2.0) };
        c = next;
        fs = fnext;
        grad = next_grad;
        trace.push(fs + l1(&c));
        if mapping < tol {
            converged = true;
            break;
        }
    }
    let factor = LowerFactor::new(c, None)?;
    Ok(FitReport {
        scatter: factor.inverse_gram()?,
        factor: Some(factor),
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// `Σᵢ ρ((zᵢ − μ)ᵀ Σ⁻¹ (zᵢ − μ)) + (n/2) log det Σ`.
pub fn joint_objective<T: Real>(
    scatter: &SpdMatrix<T>,
    mean: &DVector<T>,
    data: &SampleSet<T>,
    f: &dyn RhoFunction<T>,
) -> Result<T> {
    neg_log_likelihood(scatter, &data.centered(mean), f)
}

/// Alternating majorization-minimization for location and scatter under a
/// chordal pattern. Each sweep reweights at the current `(μ, Σ)`, sets `μ` to
/// the weighted mean and solves the weighted chordal problem on the data
/// centered at the new `μ`. Starts from the sample mean.
pub fn fit_chordal_joint_mean<T: Real>(
    data: &SampleSet<T>,
    f: &dyn RhoFunction<T>,
    g: &SparsityPattern,
    cfg: &FitConfig<T>,
) -> Result<(FitReport<T>, DVector<T>)> {
    cfg.validate()?;
    let p = data.p();
    if g.p() != p {
        return Err(Error::DimensionMismatch { expected: p, got: g.p() });
    }
    let ord = perfect_relabeling(g)?;
    let (work, wg, init) = match &ord {
        None => (data.clone(), g.clone(), cfg.init.clone()),
        Some(o) => (
            SampleSet::new(o.permute_columns(data.rows()))?,
            permute_pattern(g, o)?,
            permuted_init(&cfg.init, o),
        ),
    };
    let mut mu = work.mean();
    let mut sigma = initial_scatter(&work.centered(&mu), &init)?;
    let mut trace = vec![joint_objective(&sigma, &mu, &work, f)?];
    let mut factor = None;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iter {
        let q = sigma.inverse_quadratic_forms(work.centered(&mu).rows())?;
        let w = weights_from_forms(&q, f, cfg.quad_clamp)?;
        let total = w.iter().fold(T::zero(), |a, &x| a + x);
        if !(total > T::zero()) {
            return Err(Error::DivergedWeights(0));
        }
        let next_mu = work.rows().transpose() * DVector::from_vec(w.clone()) / total;
        let centered = work.centered(&next_mu);
        let c = solve_weighted_chordal_ggm(&centered, &WeightVector::new(w)?, &wg)?;
        let next = c.inverse_gram()?;
        let change = relative_frobenius(next.as_matrix(), sigma.as_matrix())
            .max((&next_mu - &mu).norm() / mu.norm().max(T::one()));
        trace.push(joint_objective(&next, &next_mu, &work, f)?);
        sigma = next;
        mu = next_mu;
        factor = Some(c);
        iterations = it;
        if change < cfg.rel_tol {
            converged = true;
            break;
        }
    }
    if let Some(o) = &ord {
        sigma = SpdMatrix::from_computed(o.unpermute_symmetric(sigma.as_matrix()))?;
        let pos = o.positions();
        mu = DVector::from_fn(p, |v, _| mu[pos[v]]);
        factor = None;
    }
    Ok((
        FitReport {
            scatter: sigma,
            factor,
            objective_trace: trace,
            iterations,
            converged,
        },
        mu,
    ))
}

/// The Cholesky objective, exposed for reports produced by factor-based fits.
pub fn factor_objective<T: Real>(report: &FitReport<T>, data: &SampleSet<T>, f: &dyn RhoFunction<T>) -> Result<T> {
    match &report.factor {
        Some(c) => cholesky_objective(c, data, f),
        None => neg_log_likelihood(&report.scatter, data, f),
    }
}

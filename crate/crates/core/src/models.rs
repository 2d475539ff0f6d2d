//! ρ-function families, likelihood objectives, the generalized Gaussian
//! density and sampler, and the scatter-to-covariance scale.
//!
//! Likelihoods use the real-valued normalization
//! `L0(Σ) = Σᵢ ρ(zᵢᵀ Σ⁻¹ zᵢ) + (n/2) log det Σ`, so that the Gaussian member
//! (β = 1, ρ(x) = x/2) is minimized by the sample second-moment matrix.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spd::{LowerFactor, SpdMatrix};

/// Lower clamp applied to the argument of `u` for MGGD shapes below one,
/// where `u` diverges at the origin.
pub const WEIGHT_ARG_CLAMP: f64 = 1e-12;

/// A loss `ρ(x) = −log g(x)` on quadratic forms together with its derivative
/// `u = ρ′`. Estimators accept anything implementing this trait; the named
/// families live in [`RhoFamily`].
pub trait RhoFunction<T: Real>: Send + Sync {
    fn rho(&self, x: T) -> T;

    /// `u(x) = ρ′(x)`, the reweighting function.
    fn weight(&self, x: T) -> T;

    fn nondecreasing(&self) -> bool {
        true
    }

    /// `ρ(eˣ)` convex: the likelihood is geodesically convex.
    fn rho_exp_convex(&self) -> bool;

    /// `ρ(x²)` convex: the Cholesky-parameterized objective is convex.
    fn rho_sq_convex(&self) -> bool;

    /// `ρ″ ≤ 0`: the tangent-line majorizer holds, so reweighting descends.
    fn rho_concave(&self) -> bool;

    /// Likelihood invariant under `Σ ↦ cΣ` (Tyler); iterates are then
    /// normalized to trace `p`.
    fn scale_invariant(&self) -> bool {
        false
    }

    /// `ρ` finite at zero. Observations at the origin are dropped otherwise.
    fn finite_at_zero(&self) -> bool {
        true
    }

    fn label(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoFamily<T: Real> {
    /// `ρ(x) = x^β / 2`.
    Mggd { beta: T },
    /// `ρ(x) = (p/2) log x`.
    Tyler { p: usize },
    /// `u(x) = 1/2` up to the threshold, `threshold / (2x)` above.
    Huber { threshold: T },
}

impl<T: Real> RhoFamily<T> {
    pub fn mggd(beta: T) -> Result<Self> {
        if !(beta > T::zero()) || !beta.is_finite() {
            return Err(Error::InvalidShape(beta.as_f64()));
        }
        Ok(Self::Mggd { beta })
    }

    pub fn gaussian() -> Self {
        Self::Mggd { beta: T::one() }
    }

    pub fn tyler(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidSize("Tyler needs p >= 1".into()));
        }
        Ok(Self::Tyler { p })
    }

    pub fn huber(threshold: T) -> Result<Self> {
        if !(threshold > T::zero()) {
            return Err(Error::DomainError("Huber threshold must be positive".into()));
        }
        Ok(Self::Huber { threshold })
    }

    pub fn beta(&self) -> Option<T> {
        match self {
            Self::Mggd { beta } => Some(*beta),
            _ => None,
        }
    }
}

impl<T: Real> RhoFunction<T> for RhoFamily<T> {
    fn rho(&self, x: T) -> T {
        let half = T::lit(0.5);
        match *self {
            Self::Mggd { beta } => x.powf(beta) * half,
            Self::Tyler { p } => T::from_count(p) * half * x.ln(),
            Self::Huber { threshold } => {
                if x <= threshold {
                    x * half
                } else {
                    threshold * half * (T::one() + (x / threshold).ln())
                }
            }
        }
    }

    fn weight(&self, x: T) -> T {
        let half = T::lit(0.5);
        match *self {
            Self::Mggd { beta } => {
                if beta == T::one() {
                    half
                } else if beta < T::one() {
                    beta * half * x.max(T::lit(WEIGHT_ARG_CLAMP)).powf(beta - T::one())
                } else {
                    beta * half * x.powf(beta - T::one())
                }
            }
            Self::Tyler { p } => T::from_count(p) * half / x,
            Self::Huber { threshold } => {
                if x <= threshold {
                    half
                } else {
                    threshold * half / x
                }
            }
        }
    }

    fn rho_exp_convex(&self) -> bool {
        true
    }

    fn rho_sq_convex(&self) -> bool {
        match *self {
            Self::Mggd { beta } => beta >= T::lit(0.5),
            Self::Tyler { .. } | Self::Huber { .. } => false,
        }
    }

    fn rho_concave(&self) -> bool {
        match *self {
            Self::Mggd { beta } => beta <= T::one(),
            Self::Tyler { .. } | Self::Huber { .. } => true,
        }
    }

    fn scale_invariant(&self) -> bool {
        matches!(self, Self::Tyler { .. })
    }

    fn finite_at_zero(&self) -> bool {
        !matches!(self, Self::Tyler { .. })
    }

    fn label(&self) -> String {
        match self {
            Self::Mggd { beta } => format!("mggd(beta={beta})"),
            Self::Tyler { p } => format!("tyler(p={p})"),
            Self::Huber { threshold } => format!("huber(threshold={threshold})"),
        }
    }
}

/// `n` observations in `ℝᵖ`, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet<T: Real> {
    rows: DMatrix<T>,
}

impl<T: Real> SampleSet<T> {
    pub fn new(rows: DMatrix<T>) -> Result<Self> {
        if rows.ncols() == 0 {
            return Err(Error::InvalidSize("observations need at least one coordinate".into()));
        }
        if let Some(pos) = rows.iter().position(|x| !x.is_finite()) {
            return Err(Error::DomainError(format!(
                "non-finite entry in observation {}",
                pos % rows.nrows().max(1)
            )));
        }
        Ok(Self { rows })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let p = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
    }

    pub(crate) fn empty(p: usize) -> Self {
        Self {
            rows: DMatrix::zeros(0, p),
        }
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn p(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> &DMatrix<T> {
        &self.rows
    }

    pub fn row(&self, i: usize) -> DVector<T> {
        self.rows.row(i).transpose()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            rows: self.rows.select_rows(idx),
        }
    }

    pub fn mean(&self) -> DVector<T> {
        let n = T::from_count(self.n().max(1));
        DVector::from_fn(self.p(), |j, _| self.rows.column(j).sum() / n)
    }

    pub fn centered(&self, mu: &DVector<T>) -> Self {
        let mut rows = self.rows.clone();
        for mut r in rows.row_iter_mut() {
            r -= mu.transpose();
        }
        Self { rows }
    }

    /// `Σᵢ wᵢ zᵢ zᵢᵀ`.
    pub fn weighted_scatter(&self, w: &[T]) -> DMatrix<T> {
        let mut scaled = self.rows.clone();
        for (i, mut r) in scaled.row_iter_mut().enumerate() {
            r *= w[i];
        }
        let mut m = scaled.transpose() * &self.rows;
        let p = m.nrows();
        for i in 0..p {
            for j in (i + 1)..p {
                let v = (m[(i, j)] + m[(j, i)]) * T::lit(0.5);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// `(1/n) Σᵢ zᵢ zᵢᵀ`, the Gaussian MLE of a zero-mean scatter.
    pub fn second_moment(&self) -> DMatrix<T> {
        let n = self.n();
        self.weighted_scatter(&vec![T::one() / T::from_count(n.max(1)); n])
    }

    /// Numerical rank test of the span condition `sp{z₁,…,zₙ} = ℝᵖ`.
    pub fn spans_space(&self) -> bool {
        if self.n() < self.p() {
            return false;
        }
        let svd = self.rows.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let tol = smax * T::from_count(self.n().max(self.p())) * T::eps();
        smax > T::zero() && svd.singular_values.iter().all(|&s| s > tol)
    }
}

fn check_dims<T: Real>(p: usize, data: &SampleSet<T>) -> Result<()> {
    if data.p() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: data.p(),
        });
    }
    Ok(())
}

fn sum_rho<T: Real>(q: &[T], f: &dyn RhoFunction<T>) -> Result<T> {
    let mut acc = T::zero();
    for (i, &x) in q.iter().enumerate() {
        let r = f.rho(x);
        if !r.is_finite() {
            return Err(Error::DomainError(format!(
                "rho undefined at quadratic form {x} of observation {i}"
            )));
        }
        acc += r;
    }
    Ok(acc)
}

/// `Σᵢ ρ(zᵢᵀ S⁻¹ zᵢ) + (n/2) log det S`.
pub fn neg_log_likelihood<T: Real>(s: &SpdMatrix<T>, data: &SampleSet<T>, f: &dyn RhoFunction<T>) -> Result<T> {
    check_dims(s.dim(), data)?;
    let q = s.inverse_quadratic_forms(data.rows())?;
    let n = T::from_count(data.n());
    Ok(sum_rho(&q, f)? + n * T::lit(0.5) * s.log_det()?)
}

/// `Σᵢ ρ(‖Cᵀzᵢ‖²) − n Σⱼ log Cⱼⱼ`, equal to the likelihood at `Σ = (CCᵀ)⁻¹`.
pub fn cholesky_objective<T: Real>(c: &LowerFactor<T>, data: &SampleSet<T>, f: &dyn RhoFunction<T>) -> Result<T> {
    check_dims(c.dim(), data)?;
    let q = projected_norms(c.entries(), data.rows());
    Ok(sum_rho(&q, f)? - T::from_count(data.n()) * c.log_diag_sum())
}

/// `‖Cᵀzᵢ‖²` for every row.
pub(crate) fn projected_norms<T: Real>(c: &DMatrix<T>, rows: &DMatrix<T>) -> Vec<T> {
    let v = rows * c;
    v.row_iter().map(|r| r.norm_squared()).collect()
}

/// `log C_{p,β}` of the generalized Gaussian density.
pub fn mggd_log_normalizer(p: usize, beta: f64) -> f64 {
    let pf = p as f64;
    beta.ln() + ln_gamma(pf / 2.0)
        - pf / 2.0 * std::f64::consts::PI.ln()
        - ln_gamma(pf / (2.0 * beta))
        - pf / (2.0 * beta) * std::f64::consts::LN_2
}

/// Log density of the generalized Gaussian with location `mu`, scatter `s`
/// and shape `beta`.
pub fn mggd_log_density<T: Real>(z: &DVector<T>, mu: &DVector<T>, s: &SpdMatrix<T>, beta: T) -> Result<T> {
    if !(beta > T::zero()) {
        return Err(Error::InvalidShape(beta.as_f64()));
    }
    if z.len() != s.dim() || mu.len() != s.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            got: z.len(),
        });
    }
    let diff = (z - mu).transpose();
    let q = s.inverse_quadratic_forms(&DMatrix::from_row_slice(1, s.dim(), diff.as_slice()))?[0];
    let half = T::lit(0.5);
    Ok(T::lit(mggd_log_normalizer(s.dim(), beta.as_f64())) - half * s.log_det()? - half * q.powf(beta))
}

/// Sum of log densities over the rows of `data`.
pub fn mggd_log_likelihood<T: Real>(data: &SampleSet<T>, mu: &DVector<T>, s: &SpdMatrix<T>, beta: T) -> Result<T> {
    if !(beta > T::zero()) {
        return Err(Error::InvalidShape(beta.as_f64()));
    }
    check_dims(s.dim(), data)?;
    let q = s.inverse_quadratic_forms(data.centered(mu).rows())?;
    let half = T::lit(0.5);
    let per = T::lit(mggd_log_normalizer(s.dim(), beta.as_f64())) - half * s.log_det()?;
    Ok(q.iter().fold(T::zero(), |acc, &x| acc + per - half * x.powf(beta)))
}

/// Scatter-to-covariance scale `c(β) = 2^{1/β} Γ((p+2)/(2β)) / (p Γ(p/(2β)))`.
pub fn covariance_scale(beta: f64, p: usize) -> f64 {
    let pf = p as f64;
    if beta == 1.0 {
        return 1.0;
    }
    (std::f64::consts::LN_2 / beta + ln_gamma((pf + 2.0) / (2.0 * beta)) - pf.ln() - ln_gamma(pf / (2.0 * beta))).exp()
}

/// Draws `z = μ + r A w` with `A = chol(S)`, `w` uniform on the sphere and
/// `r = (2s)^{1/(2β)}`, `s ~ Gamma(p/(2β), 1)`. Deterministic in `seed`.
pub fn mggd_sample<T: Real>(n: usize, mu: &DVector<T>, s: &SpdMatrix<T>, beta: T, seed: u64) -> Result<SampleSet<T>> {
    if !(beta > T::zero()) || !beta.is_finite() {
        return Err(Error::InvalidShape(beta.as_f64()));
    }
    let p = s.dim();
    if mu.len() != p {
        return Err(Error::DimensionMismatch { expected: p, got: mu.len() });
    }
    if n == 0 {
        return Ok(SampleSet::empty(p));
    }
    let a = s.cholesky()?.into_entries();
    let b = beta.as_f64();
    let radial = Gamma::new(p as f64 / (2.0 * b), 1.0).map_err(|_| Error::InvalidShape(b))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = DMatrix::<T>::zeros(n, p);
    let mut w = DVector::<T>::zeros(p);
    for i in 0..n {
        let norm = loop {
            let mut ss = 0.0;
            for wj in w.iter_mut() {
                let x: f64 = StandardNormal.sample(&mut rng);
                ss += x * x;
                *wj = T::lit(x);
            }
            if ss > 0.0 {
                break ss.sqrt();
            }
        };
        let s_draw: f64 = radial.sample(&mut rng);
        let r = (2.0 * s_draw).powf(1.0 / (2.0 * b));
        let z = &a * &w * T::lit(r / norm) + mu;
        rows.row_mut(i).copy_from(&z.transpose());
    }
    Ok(SampleSet { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_data(n: usize, p: usize, seed: u64) -> SampleSet<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SampleSet::new(DMatrix::from_fn(n, p, |_, _| rng.random_range(-2.0..2.0))).unwrap()
    }

    #[test]
    fn family_flags() {
        for (beta, sq) in [(0.25, false), (0.5, true), (1.0, true), (2.0, true)] {
            let f = RhoFamily::mggd(beta).unwrap();
            assert!(f.rho_exp_convex());
            assert_eq!(f.rho_sq_convex(), sq);
        }
        let t = RhoFamily::<f64>::tyler(4).unwrap();
        assert!(t.rho_exp_convex() && !t.rho_sq_convex() && t.scale_invariant());
        assert!(RhoFamily::mggd(0.0).is_err());
        assert!(RhoFamily::mggd(-1.0).is_err());
        let h = RhoFamily::huber(2.0).unwrap();
        assert_relative_eq!(h.rho(2.0), 1.0);
    }

    #[test]
    fn weights_match_finite_differences() {
        let families = [
            RhoFamily::mggd(0.25).unwrap(),
            RhoFamily::mggd(0.5).unwrap(),
            RhoFamily::mggd(1.0).unwrap(),
            RhoFamily::mggd(2.0).unwrap(),
            RhoFamily::mggd(1.7).unwrap(),
            RhoFamily::tyler(5).unwrap(),
            RhoFamily::huber(1.5).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for f in &families {
            for _ in 0..100 {
                let x: f64 = rng.random_range(0.05..20.0);
                if let RhoFamily::Huber { threshold } = f {
                    if (x - threshold).abs() < 1e-3 {
                        continue;
                    }
                }
                let h = 1e-6 * x;
                let fd = (f.rho(x + h) - f.rho(x - h)) / (2.0 * h);
                let u = f.weight(x);
                assert!((fd - u).abs() <= 1e-6 * u.abs().max(1e-12) + 1e-9, "{} at {x}: {fd} vs {u}", f.label());
            }
        }
    }

    #[test]
    fn weight_clamped_at_origin() {
        let f = RhoFamily::mggd(0.5).unwrap();
        assert!(f.weight(0.0f64).is_finite());
        assert_eq!(f.weight(0.0), f.weight(WEIGHT_ARG_CLAMP));
    }

    #[test]
    fn gaussian_likelihood_at_identity() {
        let data = random_data(7, 3, 1);
        let f = RhoFamily::gaussian();
        let l = neg_log_likelihood(&SpdMatrix::identity(3), &data, &f).unwrap();
        let expected: f64 = data.rows().row_iter().map(|r| 0.5 * r.norm_squared()).sum();
        assert_relative_eq!(l, expected, max_relative = 1e-13);
    }

    #[test]
    fn tyler_likelihood_scale_invariant() {
        let data = random_data(20, 4, 2);
        let f = RhoFamily::tyler(4).unwrap();
        let s = SpdMatrix::from_diagonal(&[1.0, 2.0, 0.5, 3.0]).unwrap();
        let a = neg_log_likelihood(&s, &data, &f).unwrap();
        let b = neg_log_likelihood(&s.scaled(7.3).unwrap(), &data, &f).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn tyler_rejects_origin() {
        let mut rows = random_data(5, 2, 3).rows().clone();
        rows.row_mut(2).fill(0.0);
        let data = SampleSet::new(rows).unwrap();
        let f = RhoFamily::tyler(2).unwrap();
        assert!(matches!(
            neg_log_likelihood(&SpdMatrix::identity(2), &data, &f),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn scalar_laplace_likelihood() {
        let data = SampleSet::new(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let f = RhoFamily::mggd(0.5).unwrap();
        for sigma in [0.3f64, 1.0, 4.0] {
            let l = neg_log_likelihood(&SpdMatrix::from_diagonal(&[sigma]).unwrap(), &data, &f).unwrap();
            assert_relative_eq!(l, 1.0 / (2.0 * sigma.sqrt()) + 0.5 * sigma.ln(), max_relative = 1e-14);
        }
    }

    #[test]
    fn cholesky_objective_matches_likelihood() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = random_data(15, 4, 5);
        for beta in [0.3, 0.5, 1.0, 2.0] {
            let f = RhoFamily::mggd(beta).unwrap();
            let mut c = DMatrix::zeros(4, 4);
            for j in 0..4 {
                c[(j, j)] = rng.random_range(0.5..2.0);
                for i in (j + 1)..4 {
                    c[(i, j)] = rng.random_range(-0.5..0.5);
                }
            }
            let c = LowerFactor::new(c, None).unwrap();
            let a = cholesky_objective(&c, &data, &f).unwrap();
            let b = neg_log_likelihood(&c.inverse_gram().unwrap(), &data, &f).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-10);
        }
        let f = RhoFamily::mggd(0.7).unwrap();
        let id = LowerFactor::identity(4);
        let direct: f64 = data.rows().row_iter().map(|r| f.rho(r.norm_squared())).sum();
        assert_relative_eq!(cholesky_objective(&id, &data, &f).unwrap(), direct, max_relative = 1e-14);
    }

    #[test]
    fn doubling_diagonal_shifts_log_term() {
        let data = random_data(9, 3, 6);
        let f = RhoFamily::gaussian();
        let c1 = LowerFactor::new(DMatrix::from_diagonal_element(3, 3, 1.0), None).unwrap();
        let c2 = LowerFactor::new(DMatrix::from_diagonal_element(3, 3, 2.0), None).unwrap();
        let rho1: f64 = data.rows().row_iter().map(|r| f.rho(r.norm_squared())).sum();
        let rho2: f64 = data.rows().row_iter().map(|r| f.rho(4.0 * r.norm_squared())).sum();
        let d = cholesky_objective(&c2, &data, &f).unwrap() - cholesky_objective(&c1, &data, &f).unwrap();
        assert_relative_eq!(d - (rho2 - rho1), -9.0 * 3.0 * 2f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn gaussian_density_reduction() {
        let s = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        let z = DVector::from_vec(vec![0.4, -1.2]);
        let mu = DVector::from_vec(vec![0.1, 0.2]);
        let got = mggd_log_density(&z, &mu, &s, 1.0).unwrap();
        let inv = s.inverse().unwrap();
        let d = &z - &mu;
        let q = (d.transpose() * inv.as_matrix() * &d)[(0, 0)];
        let expected = -(2.0 * std::f64::consts::PI).ln() - 0.5 * s.log_det().unwrap() - 0.5 * q;
        assert_relative_eq!(got, expected, max_relative = 1e-13);
    }

    #[test]
    fn density_integrates_to_one_in_one_dimension() {
        // composite Simpson on [-L, L] with heavy tails handled by a wide window
        let s = SpdMatrix::from_diagonal(&[1.0]).unwrap();
        let mu = DVector::from_vec(vec![0.0]);
        let (lim, m) = (80.0, 200_000usize);
        let h = 2.0 * lim / m as f64;
        let mut acc = 0.0;
        for k in 0..=m {
            let x = -lim + k as f64 * h;
            let w = if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * mggd_log_density(&DVector::from_vec(vec![x]), &mu, &s, 0.5).unwrap().exp();
        }
        assert!((acc * h / 3.0 - 1.0).abs() < 1e-6, "{}", acc * h / 3.0);
    }

    #[test]
    fn density_integrates_to_one_in_two_dimensions() {
        // polar coordinates after whitening: ∫ f = 2π ∫ r f(r) dr · √det S
        let s = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.5, 0.4, 0.4, 0.8])).unwrap();
        let mu = DVector::from_vec(vec![0.0, 0.0]);
        let l = s.cholesky().unwrap();
        let (rmax, m) = (60.0, 60_000usize);
        let h = rmax / m as f64;
        let mut acc = 0.0;
        for k in 0..=m {
            let r = k as f64 * h;
            let z = l.entries() * DVector::from_vec(vec![r, 0.0]);
            let w = if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * r * mggd_log_density(&z, &mu, &s, 0.7).unwrap().exp();
        }
        let total = 2.0 * std::f64::consts::PI * acc * h / 3.0 * (0.5 * s.log_det().unwrap()).exp();
        assert!((total - 1.0).abs() < 1e-4, "{total}");
    }

    #[test]
    fn covariance_scale_values() {
        for p in 1..20 {
            assert_eq!(covariance_scale(1.0, p), 1.0);
            assert_relative_eq!(covariance_scale(0.5, p), 4.0 * (p as f64 + 1.0), max_relative = 1e-12);
        }
        assert_relative_eq!(covariance_scale(0.5, 10), 44.0, max_relative = 1e-12);
    }

    #[test]
    fn sampler_shapes_and_determinism() {
        let s = SpdMatrix::<f64>::identity(3);
        let mu = DVector::zeros(3);
        assert_eq!(mggd_sample(0, &mu, &s, 0.5, 1).unwrap().n(), 0);
        let a = mggd_sample(10, &mu, &s, 0.5, 42).unwrap();
        let b = mggd_sample(10, &mu, &s, 0.5, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, mggd_sample(10, &mu, &s, 0.5, 43).unwrap());
        assert!(matches!(mggd_sample(5, &mu, &s, 0.0, 1), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn gaussian_radius_is_chi_squared() {
        let p = 4;
        let data = mggd_sample(100_000, &DVector::zeros(p), &SpdMatrix::identity(p), 1.0, 7).unwrap();
        let mean_r2 = data.rows().row_iter().map(|r| r.norm_squared()).sum::<f64>() / data.n() as f64;
        assert!((mean_r2 - p as f64).abs() < 0.02 * p as f64, "{mean_r2}");
    }

    #[test]
    fn span_condition() {
        assert!(random_data(10, 3, 1).spans_space());
        assert!(!random_data(2, 3, 1).spans_space());
        let mut rows = random_data(10, 3, 1).rows().clone();
        rows.column_mut(2).fill(0.0);
        assert!(!SampleSet::new(rows).unwrap().spans_space());
    }
}

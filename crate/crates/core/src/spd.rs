//! Dense symmetric positive definite matrices and the lower-triangular
//! factors used to parameterize them.
//!
//! Positive definiteness is always decided by attempting a Cholesky
//! factorization, never by scanning eigenvalues.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::SparsityPattern;
use crate::scalar::Real;

/// Eigenvalue floor applied before taking fractional matrix powers.
pub const EIGEN_CLAMP: f64 = 1e-14;

/// Symmetric positive definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix<T: Real> {
    m: DMatrix<T>,
}

/// Lower-triangular matrix with a strictly positive diagonal, optionally
/// restricted to the support of a sparsity pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerFactor<T: Real> {
    c: DMatrix<T>,
    pattern: Option<SparsityPattern>,
}

fn symmetry_tol<T: Real>() -> T {
    T::lit(1e-12).max(T::eps() * T::lit(64.0))
}

fn symmetrize<T: Real>(m: &mut DMatrix<T>) {
    let p = m.nrows();
    let half = T::lit(0.5);
    for i in 0..p {
        for j in (i + 1)..p {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Dense Cholesky factorization `m = L Lᵀ` of a symmetric matrix, reading
/// only the lower triangle.
fn cholesky_raw<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let p = m.nrows();
    let mut l = DMatrix::<T>::zeros(p, p);
    for j in 0..p {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite {
                index: j,
                pivot: d.as_f64(),
            });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..p {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix with nonzero diagonal.
fn lower_inverse<T: Real>(l: &DMatrix<T>) -> DMatrix<T> {
    let p = l.nrows();
    let mut inv = DMatrix::<T>::zeros(p, p);
    for j in 0..p {
        inv[(j, j)] = T::one() / l[(j, j)];
        for i in (j + 1)..p {
            let mut s = T::zero();
            for k in j..i {
                s += l[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = -s / l[(i, i)];
        }
    }
    inv
}

impl<T: Real> SpdMatrix<T> {
    /// Validates symmetry and positive definiteness.
    pub fn new(m: DMatrix<T>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidSize("empty matrix".into()));
        }
        let scale = m.iter().fold(T::zero(), |a, &x| a.max(x.abs()));
        let tol = symmetry_tol::<T>() * scale.max(T::one());
        let p = m.nrows();
        for i in 0..p {
            for j in (i + 1)..p {
                if (m[(i, j)] - m[(j, i)]).abs() > tol {
                    return Err(Error::NotSymmetric);
                }
            }
        }
        cholesky_raw(&m)?;
        Ok(Self { m })
    }

    /// Symmetrizes a computed matrix (removing round-off asymmetry) and
    /// checks positive definiteness.
    pub(crate) fn from_computed(mut m: DMatrix<T>) -> Result<Self> {
        symmetrize(&mut m);
        cholesky_raw(&m)?;
        Ok(Self { m })
    }

    pub fn identity(p: usize) -> Self {
        Self {
            m: DMatrix::identity(p, p),
        }
    }

    pub fn from_diagonal(d: &[T]) -> Result<Self> {
        let p = d.len();
        let mut m = DMatrix::zeros(p, p);
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<T> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.m
    }

    pub fn trace(&self) -> T {
        self.m.trace()
    }

    /// Multiplies by a positive scalar.
    pub fn scaled(&self, c: T) -> Result<Self> {
        if !(c > T::zero()) {
            return Err(Error::DomainError("scale must be positive".into()));
        }
        Ok(Self { m: &self.m * c })
    }

    /// `A M Aᵀ` for an invertible `A`.
    pub fn congruence(&self, a: &DMatrix<T>) -> Result<Self> {
        if a.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: a.ncols(),
            });
        }
        Self::from_computed(a * &self.m * a.transpose())
    }

    pub fn cholesky(&self) -> Result<LowerFactor<T>> {
        cholesky(self)
    }

    pub fn inverse(&self) -> Result<Self> {
        spd_inverse(self)
    }

    pub fn log_det(&self) -> Result<T> {
        log_det(self)
    }

    /// `(x - mu)ᵀ M⁻¹ (x - mu)` style quadratic forms for many vectors at once.
    /// Rows of `data` are the vectors.
    pub fn inverse_quadratic_forms(&self, data: &DMatrix<T>) -> Result<Vec<T>> {
        if data.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: data.ncols(),
            });
        }
        let l = cholesky_raw(&self.m)?;
        let linv = lower_inverse(&l);
        // rows of data * L⁻ᵀ are (L⁻¹ z)ᵀ
        let y = data * linv.transpose();
        Ok(y.row_iter().map(|r| r.norm_squared()).collect())
    }

    /// Symmetric matrix power via eigendecomposition with eigenvalues
    /// clamped at [`EIGEN_CLAMP`].
    pub fn powf(&self, t: T) -> Self {
        Self {
            m: sym_pow(&self.m, t),
        }
    }
}

impl<T: Real> AsRef<DMatrix<T>> for SpdMatrix<T> {
    fn as_ref(&self) -> &DMatrix<T> {
        &self.m
    }
}

pub(crate) fn sym_pow<T: Real>(m: &DMatrix<T>, t: T) -> DMatrix<T> {
    let eig = m.clone().symmetric_eigen();
    let floor = T::lit(EIGEN_CLAMP);
    let mut scaled = eig.eigenvectors.clone();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        let w = lambda.max(floor).powf(t);
        scaled.column_mut(k).scale_mut(w);
    }
    let mut out = scaled * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    out
}

impl<T: Real> LowerFactor<T> {
    /// Validates triangularity, the positive diagonal and, when given, the
    /// pattern support (exact zeros outside the pattern).
    pub fn new(c: DMatrix<T>, pattern: Option<SparsityPattern>) -> Result<Self> {
        let p = c.nrows();
        if c.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: c.ncols(),
            });
        }
        if let Some(g) = &pattern {
            if g.p() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: g.p(),
                });
            }
        }
        for j in 0..p {
            if !(c[(j, j)] > T::zero()) {
                return Err(Error::InvalidFactor(format!("diagonal entry {j} not positive")));
            }
            for i in 0..j {
                if c[(i, j)] != T::zero() {
                    return Err(Error::InvalidFactor(format!("nonzero above diagonal at ({i}, {j})")));
                }
            }
            if let Some(g) = &pattern {
                for i in (j + 1)..p {
                    if c[(i, j)] != T::zero() && !g.has_edge(i, j) {
                        return Err(Error::InvalidFactor(format!("entry ({i}, {j}) outside pattern")));
                    }
                }
            }
        }
        Ok(Self { c, pattern })
    }

    pub(crate) fn from_parts_unchecked(c: DMatrix<T>, pattern: Option<SparsityPattern>) -> Self {
        Self { c, pattern }
    }

    pub fn identity(p: usize) -> Self {
        Self {
            c: DMatrix::identity(p, p),
            pattern: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn entries(&self) -> &DMatrix<T> {
        &self.c
    }

    pub fn into_entries(self) -> DMatrix<T> {
        self.c
    }

    pub fn pattern(&self) -> Option<&SparsityPattern> {
        self.pattern.as_ref()
    }

    pub fn with_pattern(self, pattern: Option<SparsityPattern>) -> Result<Self> {
        Self::new(self.c, pattern)
    }

    /// `Σ log Cⱼⱼ`.
    pub fn log_diag_sum(&self) -> T {
        (0..self.dim()).fold(T::zero(), |acc, j| acc + self.c[(j, j)].ln())
    }

    /// The product `C Cᵀ`.
    pub fn gram(&self) -> SpdMatrix<T> {
        let mut m = &self.c * self.c.transpose();
        symmetrize(&mut m);
        SpdMatrix { m }
    }

    /// `(C Cᵀ)⁻¹`, the scatter whose concentration this factor represents.
    pub fn inverse_gram(&self) -> Result<SpdMatrix<T>> {
        let cinv = lower_inverse(&self.c);
        SpdMatrix::from_computed(cinv.transpose() * cinv)
    }
}

/// Cholesky factor `C` with `C Cᵀ = M`.
pub fn cholesky<T: Real>(m: &SpdMatrix<T>) -> Result<LowerFactor<T>> {
    let c = cholesky_raw(&m.m)?;
    Ok(LowerFactor { c, pattern: None })
}

/// Cholesky factorization of a raw symmetric matrix.
pub fn cholesky_dense<T: Real>(m: &DMatrix<T>) -> Result<LowerFactor<T>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    let c = cholesky_raw(m)?;
    Ok(LowerFactor { c, pattern: None })
}

pub fn spd_inverse<T: Real>(m: &SpdMatrix<T>) -> Result<SpdMatrix<T>> {
    let l = cholesky_raw(&m.m)?;
    let linv = lower_inverse(&l);
    SpdMatrix::from_computed(linv.transpose() * linv)
}

/// `log det M = 2 Σ log Lⱼⱼ`.
pub fn log_det<T: Real>(m: &SpdMatrix<T>) -> Result<T> {
    let l = cholesky_raw(&m.m)?;
    Ok((0..l.nrows()).fold(T::zero(), |acc, j| acc + l[(j, j)].ln()) * T::lit(2.0))
}

/// Point at parameter `t` on the affine-invariant geodesic from `a` to `b`:
/// `A^{1/2} (A^{-1/2} B A^{-1/2})^t A^{1/2}`.
pub fn geodesic_point<T: Real>(a: &SpdMatrix<T>, b: &SpdMatrix<T>, t: T) -> Result<SpdMatrix<T>> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let half = T::lit(0.5);
    let a_half = sym_pow(&a.m, half);
    let a_neg_half = sym_pow(&a.m, -half);
    let mut inner = &a_neg_half * &b.m * &a_neg_half;
    symmetrize(&mut inner);
    let inner_t = sym_pow(&inner, t);
    SpdMatrix::from_computed(&a_half * inner_t * &a_half)
}

/// `‖est − truth‖_F² / ‖truth‖_F²`.
pub fn normalized_sq_frobenius_error<T: Real>(
    est: &DMatrix<T>,
    truth: &DMatrix<T>,
) -> Result<T> {
    let (e, t) = (est, truth);
    if e.shape() != t.shape() {
        return Err(Error::DimensionMismatch {
            expected: t.nrows(),
            got: e.nrows(),
        });
    }
    Ok((e - t).norm_squared() / t.norm_squared())
}

/// Relative Frobenius distance `‖a − b‖_F / ‖b‖_F`.
pub fn relative_frobenius<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    (a - b).norm() / b.norm()
}

//! Maximum-likelihood estimation of elliptical scatter matrices, with and
//! without sparsity constraints on the inverse scatter.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the `*F64`
//! and `*F32` aliases below name the common instantiations.
//!
//! ```
//! use robust_scatter::{banded_pattern, fit_chordal_mm, mggd_sample, FitConfig, RhoFamily, SpdMatrixF64};
//! use nalgebra::DVector;
//!
//! let truth = SpdMatrixF64::identity(5);
//! let data = mggd_sample(60, &DVector::zeros(5), &truth, 0.5, 7).unwrap();
//! let fit = fit_chordal_mm(&data, &RhoFamily::mggd(0.5).unwrap(), &banded_pattern(5, 2).unwrap(), &FitConfig::default()).unwrap();
//! assert!(fit.is_non_increasing(1e-10));
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod experiments;
pub mod graph;
pub mod io;
pub mod models;
pub mod scalar;
pub mod selftest;
pub mod spd;

pub use error::{Error, Result};
pub use estimators::{
    concentration_gradient, fit_chordal_joint_mean, fit_chordal_mm, fit_direct_cholesky, fit_fixed_point,
    fit_graphical_mm, fit_l1_cholesky, gaussian_pattern_mle, solve_weighted_chordal_ggm, solve_weighted_ggm_general,
    FitConfig, FitReport, GgmSolution, Init, WeightVector,
};
pub use experiments::{
    grid_precision, qda_classify, run_synthetic, sonar_experiment, toeplitz_banded_precision, ClassModel,
    EstimatorKind, GroundTruth, LabeledDataset, ResultTable, SonarConfig, SyntheticSpec,
};
pub use graph::{
    banded_pattern, find_perfect_elimination_order, grid_pattern, is_chordal, is_g_sparse, is_perfect_elimination_order,
    EliminationOrder, SparsityPattern,
};
pub use io::{load_sonar, PatternSpec, RunConfig};
pub use models::{
    cholesky_objective, covariance_scale, mggd_log_likelihood, mggd_sample, neg_log_likelihood, RhoFamily, RhoFunction,
    SampleSet,
};
pub use scalar::Real;
pub use spd::{geodesic_point, normalized_sq_frobenius_error, relative_frobenius, LowerFactor, SpdMatrix};

pub type SpdMatrixF64 = SpdMatrix<f64>;
pub type SpdMatrixF32 = SpdMatrix<f32>;
pub type LowerFactorF64 = LowerFactor<f64>;
pub type LowerFactorF32 = LowerFactor<f32>;
pub type SampleSetF64 = SampleSet<f64>;
pub type SampleSetF32 = SampleSet<f32>;
pub type RhoFamilyF64 = RhoFamily<f64>;
pub type RhoFamilyF32 = RhoFamily<f32>;
pub type FitConfigF64 = FitConfig<f64>;
pub type FitConfigF32 = FitConfig<f32>;
pub type FitReportF64 = FitReport<f64>;
pub type FitReportF32 = FitReport<f32>;
pub type WeightVectorF64 = WeightVector<f64>;
pub type SyntheticSpecF64 = SyntheticSpec<f64>;
pub type LabeledDatasetF64 = LabeledDataset<f64>;

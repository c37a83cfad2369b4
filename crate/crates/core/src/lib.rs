//! Mesh-based solvers for nonparametric penalized regression.
//!
//! Fitted values live on a mesh over the covariate domain. Observations are
//! reached through a sparse interpolation matrix `O`, the roughness penalty
//! is a Riemann sum of normalized finite differences `𝒟 f`, and the
//! resulting problem
//!
//! ```text
//! minimize ‖y − O f‖² + λ ‖𝒟 f‖₁
//! ```
//!
//! is solved with ADMM over cached banded (or envelope) Cholesky factors.

pub mod diffops;
pub mod error;
pub mod factor;
pub mod interp;
pub mod mesh;
pub mod penalty;
pub mod simulate;
pub mod solver;
pub mod sparse;

pub use diffops::{
    averaging_matrix, difference_matrix, multivariate_penalty_operator,
    normalized_difference_matrix, null_space_basis, penalty_operator, NormOrder, PenaltySpec,
};
pub use error::{MbsError, Result};

pub use interp::{
    mlp_for_mesh, mlp_matrix, mlp_matrix_multivariate, rising_polynomial_basis,
    rising_polynomial_design, spline_matrix, InterpolationPlan, Scheme,
};
pub use mesh::{Mesh, TensorMesh};
pub use penalty::{penalty_value, MeshFunction};

pub use sparse::SparseBandedMatrix;
pub use solver::{
    admm_solve, kkt_residual, lambda_grid, lambda_max, soft_threshold, solve_path, Admm,
    AdmmOptions, FitResult, IterationRecord, MbsProblem, Rho, StepResiduals,
};
pub use simulate::{
    generate_bivariate, generate_univariate, run_rmse_study, Sample, Scenario, StudyConfig,
    StudyRow,
};

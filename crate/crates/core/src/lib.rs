//! Functional adjacency spectral embedding.
//!
//! A series of symmetric network snapshots `A_1, …, A_m` observed at indices
//! `x_1 < … < x_m` is modelled as `E[A_k] = Z(x_k) Z(x_k)ᵀ`, where each node's
//! latent process is expanded in a B-spline basis. The crate estimates the
//! basis coordinates by gradient descent from a spectral initializer, selects
//! the basis and latent dimensions by network generalized cross validation,
//! and provides the usual spectral baselines, rotation-aware error metrics
//! and seeded simulation scenarios.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix `f64`, with `*32` variants for single precision.

pub mod align;
pub mod baselines;
pub mod error;
pub mod estimation;
pub mod init;
pub mod model;
pub mod scalar;
pub mod spline;
pub mod synth;
pub mod tuning;

pub use align::{err_theta_mid, err_z, err_z_star, procrustes, sequential_procrustes};
pub use baselines::{ase_per_snapshot, omni_embed, omnibus_matrix};
pub use error::{FaseError, Result};
pub use estimation::{fit_fase, fit_fase_penalized, fit_fase_sequential, FaseFit, FitOptions};
pub use init::{ase, default_blocks, diagnostics, initialize, SpectralDiagnostics};
pub use model::{
    evaluate_processes, evaluate_stack, expected_adjacency, gradient, objective, CoordinateTensor,
    FitProblem, SnapshotSeries, TrajectoryStack,
};
pub use scalar::Real;
pub use spline::{make_basis, SplineBasis};
pub use synth::{generate, make_interpolation_task, Scenario, ScenarioSpec, Simulation};
pub use tuning::{
    coordinate_descent, grid_select, ngcv, BlockRule, InitPolicy, TuningGrid, TuningResult,
};

pub type Series = SnapshotSeries<f64>;
pub type Coords = CoordinateTensor<f64>;
pub type Stack = TrajectoryStack<f64>;
pub type Basis = SplineBasis<f64>;
pub type Fit = FaseFit<f64>;
pub type Options = FitOptions<f64>;

pub type Series32 = SnapshotSeries<f32>;
pub type Coords32 = CoordinateTensor<f32>;
pub type Stack32 = TrajectoryStack<f32>;
pub type Basis32 = SplineBasis<f32>;
pub type Fit32 = FaseFit<f32>;
pub type Options32 = FitOptions<f32>;

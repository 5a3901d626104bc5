//! Solver for the one-dimensional nonlinear tempered fractional diffusion
//! equation
//!
//! ```text
//! u_t = d+(x) D+^{α,λ} u + d-(x) D-^{α,λ} u + f(u, x, t),   x ∈ (a, b), t ∈ (0, T]
//! ```
//!
//! with homogeneous Dirichlet boundaries, `1 < α < 2` and tempering `λ ≥ 0`.
//!
//! Modules, bottom up:
//! - [`weights`]: tempered Grünwald–Letnikov weights and their sign checks;
//! - [`problem`]: problem definitions, the built-in catalog and meshes;
//! - [`linalg`]: FFT Toeplitz products, banded LU, dense fallbacks;
//! - [`schemes`]: the spatial operator and the two implicit Euler steppers;
//! - [`krylov`]: right-preconditioned BiCGSTAB;
//! - [`all_at_once`]: the space-time system and its Newton–Krylov solver;
//! - [`harness`]: error tables, solver comparisons, matrix dumps.

pub mod all_at_once;
pub mod error;
pub mod harness;
pub mod krylov;
pub mod linalg;
pub mod problem;
pub mod schemes;
pub mod weights;

pub use all_at_once::{
    coarse_initial_guess, gershgorin_check, newton_solve, newton_solve_from, precond_build, AllAtOnceSystem,
    JacobianSolver, NewtonConfig, Preconditioner, SolveReport, SolveStatus,
};
pub use error::{Result, TfdeError};
pub use problem::{build_mesh, catalog, Mesh, ProblemSpec, CATALOG_NAMES};
pub use schemes::{liess_run, nlies_step_run, SchemeOptions, SchemeSolution, SpaceOperator};
pub use weights::TemperedWeights;

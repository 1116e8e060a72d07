//! Monte Carlo and finite-difference solvers for backward doubly stochastic
//! differential equations with random coefficients, and the quasilinear
//! backward SPDEs they represent.
//!
//! The pieces, bottom-up:
//!
//! - [`paths`]: reproducible W and B drivers, `←B_t = ∫_t^T φ dB`, backward
//!   Itô sums and the binary path dump.
//! - [`forward`]: Euler-Maruyama, tangent flow `∇X` and `D_θX`.
//! - [`bdsde`]: the regression-based backward solver, Picard iteration,
//!   assumption and moment diagnostics.
//! - [`malliavin`]: the variational and Malliavin-derivative layers and the
//!   identities linking them to `Z`.
//! - [`spde`]: the pathwise finite-difference solver for the SPDE.
//! - [`harness`]: scenarios, presets, solver comparison and convergence
//!   studies.
//!
//! Parallelism is rayon-based behind the `parallel` feature (on by
//! default). Every reduction is chunked in a fixed order, so results are
//! bit-identical for any thread count and with the feature off.

pub mod bdsde;
pub mod coeffs;
pub mod error;
pub mod forward;
pub mod harness;
pub mod linalg;
pub mod malliavin;
pub mod par;
pub mod paths;
pub mod regression;
pub mod spde;
pub mod stats;

pub use bdsde::{picard_solve, solve_bdsde, solve_bdsde_with, BdsdeSolution};
pub use coeffs::{CoefficientSet, Dims};
pub use error::{Error, Result};
pub use forward::{euler_forward, malliavin_dx, tangent_flow, ForwardSolution};
pub use paths::{backward_b, gen_bundle, BackwardBFunctional, BrownianBundle, TimeGrid};
pub use regression::RegressionSpec;

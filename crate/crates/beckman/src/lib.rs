//! Beckman (minimum-flow) optimal transport on 2-D grids.
//!
//! The Beckman form of the Wasserstein-1 distance replaces the transport-plan
//! LP with a flux field `M = (Mx, My)` whose divergence balances the two
//! densities:
//!
//! ```text
//! W(mu1, mu2) = inf_M ||M||_{2,1}   s.t.  div(M) + mu1 - mu2 = 0
//! ```
//!
//! under zero-flux boundary conditions (flux addressed outside the grid is
//! zero). On top of this the crate builds an unbalanced *barycenter*: a
//! representative density `mu` minimizing total flux to K input marginals,
//! with l1 slack terms that let mass be created or destroyed,
//!
//! ```text
//! inf  sum_i ||M_i||_{2,1} + alpha * sum_i ||r_i||_1 + beta * ||mu||_1
//!      s.t. div(M_i) + mu_i - mu = r_i
//! ```
//!
//! solved by a first-order primal-dual (Chambolle–Pock style) scheme built
//! from closed-form shrinkage operators. Everything downstream is an
//! application of that solver:
//!
//! - [`transform`] turns an image into two marginals by rotating it by
//!   ±theta degrees and maps the barycenter back to image space — a
//!   test-time denoising / adversarial-purification primitive.
//! - [`pipeline`] is a small self-contained classifier (manual
//!   backpropagation, no autograd) with FGSM/PGD attacks, adversarial
//!   pretraining, and single-epoch barycentric fine-tuning.
//! - [`mi`] provides the two mutual-information diagnostics used to compare
//!   prediction streams.
//! - [`oracle`] holds independent brute-force references (exact 1-D earth
//!   mover distance, projected subgradient descent) that validate the
//!   primal-dual solver in the test suites.
//!
//! The crate is `no_std`-compatible (`alloc` required): disable the default
//! `std` feature to use it without the standard library. All randomized
//! procedures take explicit seeds and are bit-reproducible.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod attack;
pub mod grid;
pub mod mi;
pub mod nn;
pub mod oracle;
pub mod pipeline;
pub mod prox;
pub mod solver;
pub mod transform;

pub use attack::AttackConfig;
pub use grid::{divergence, divergence_adjoint, laplacian_max_eig, DensityGrid, FluxField, ScalarField};
pub use mi::{mi_pairwise, mi_param_output, PredictionSet};
pub use nn::MlpModel;
pub use solver::{
    check_step_sizes, objective_value, solve_barycenter, solve_distance, BarycenterProblem,
    SolverConfig, SolverState, SolverTrace, StepSizeReport,
};
pub use transform::{barycentric_transform, make_marginals, rotate_bilinear, ImageTensor, TransformParams};

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("field dimensions {expected_h}x{expected_w} do not match {got_h}x{got_w}")]
    ShapeMismatch {
        expected_h: usize,
        expected_w: usize,
        got_h: usize,
        got_w: usize,
    },
    #[error("field of {h}x{w} cells given {len} values")]
    LengthMismatch { h: usize, w: usize, len: usize },
    #[error("non-finite value {value} at index {index}")]
    NotFinite { index: usize, value: f64 },
    #[error("negative density {value} at index {index}")]
    NegativeDensity { index: usize, value: f64 },
    #[error("empty grid (height and width must be >= 1)")]
    EmptyGrid,
    #[error("parameter {name} must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("need at least two marginals, got {0}")]
    TooFewMarginals(usize),
    #[error("masses differ beyond tolerance: {mass1} vs {mass2}")]
    MassMismatch { mass1: f64, mass2: f64 },
    #[error("power iteration did not converge within {iterations} iterations (last estimate {last})")]
    PowerIterationStalled { iterations: usize, last: f64 },
    #[error("step sizes violate the convergence condition: tau1*tau2*(lambda_max+3) = {product} >= 1")]
    StepSizeViolation { product: f64 },
    #[error("solver produced a non-finite iterate at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("model input dimension {expected} does not match image size {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("prediction row {row} does not sum to 1 (sum = {sum})")]
    BadPredictionRow { row: usize, sum: f64 },
    #[error("prediction sets have mismatched shape: {n1}x{c1} vs {n2}x{c2}")]
    PredictionShapeMismatch { n1: usize, c1: usize, n2: usize, c2: usize },
    #[error("dataset is inconsistent: {0}")]
    BadDataset(&'static str),
    #[error("training diverged: non-finite loss at step {step}")]
    TrainingDiverged { step: usize },
    #[error("attack config: {0}")]
    BadAttackConfig(&'static str),
}

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

//! Solving the classical obstacle problem
//!
//! ```text
//!   -Δu ≥ f,   u ≥ φ,   (-Δu - f)(u - φ) = 0   in Ω,     u = 0 on ∂Ω
//! ```
//!
//! by minimizing variational energies over a two-layer network
//! `U(x; θ) = W₂ᵀ σ(W₁ᵀ x + b₁) + b₂`, with the boundary condition built in
//! through a cutoff function ζ that vanishes on ∂Ω.
//!
//! Two schemes are provided:
//!
//! * [`method1`]: the feasibility shift. `(U + δ_U) ζ` with
//!   `δ_U = max (φ/ζ − U)⁺` always lies above the obstacle, so the plain
//!   Dirichlet energy can be minimized without any penalty term.
//! * [`method2`]: the penalized energy with `B_ε(φ − Uζ)`, optionally driven
//!   by a homotopy in the penalty weight `t ∈ [0, 1]`.
//!
//! [`fd_oracle`] holds an independent finite-difference ground truth (PSOR,
//! penalized Newton, Poisson) and [`metrics`] the error norms, empirical
//! rates and seed aggregation used by the benchmark harness in
//! [`experiment`].
//!
//! All numerical code is generic over [`Scalar`]; the aliases below fix the
//! common `f64` and `f32` instantiations.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod experiment;
pub mod fd_oracle;
pub mod method1;
pub mod method2;
pub mod metrics;
pub mod optimizer;
pub mod problem;
pub mod quadrature;
pub mod scalar;
pub mod shallow_net;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use method1::Method1;
pub use method2::{Method2, PenaltyFamily};
pub use optimizer::{minimize, OptimizerConfig, RunTrace, StepPolicy, Termination};
pub use problem::{CutoffFunction, Domain, ObstacleProblem};
pub use quadrature::QuadratureGrid;
pub use shallow_net::{Activation, NetworkParams};

/// Double-precision network parameters.
pub type Params = NetworkParams<f64>;
/// Single-precision network parameters.
pub type Params32 = NetworkParams<f32>;
/// Double-precision problem definition.
pub type Problem = ObstacleProblem<f64>;
/// Single-precision problem definition.
pub type Problem32 = ObstacleProblem<f32>;
/// Double-precision quadrature grid.
pub type Grid = QuadratureGrid<f64>;
/// Single-precision quadrature grid.
pub type Grid32 = QuadratureGrid<f32>;
/// Double-precision penalty family.
pub type Penalty = PenaltyFamily<f64>;
/// Single-precision penalty family.
pub type Penalty32 = PenaltyFamily<f32>;

//! Explicit solutions of the replicator-mutator equation
//!
//! ```text
//! ∂ₜu = σ²∂ₓₓu + (f(x) − f̄(t))u,   f̄(t) = ∫ f u dx,   f(x) = ∓x²
//! ```
//!
//! For the harmonic fitness `f = −x²` every solution relaxes to the Gaussian
//! `φ(x) = (2πσ)^{-1/2} e^{-x²/(2σ)}`; for the inverted fitness `f = +x²`
//! every solution goes extinct no later than `π/(4σ)`.
//!
//! The crate evaluates the closed-form solution ([`closed_form`]), the exact
//! Gaussian dynamics ([`gaussian_dynamics`]), the heat-equation pipeline the
//! closed form is derived from ([`transform_chain`]), and an independent
//! finite-difference solver of the nonlocal PDE ([`pde_oracle`]) used as a
//! referee. [`analysis`] turns these into convergence and extinction reports
//! and [`cli`] exposes everything on the command line.

pub mod analysis;
pub mod cli;
pub mod closed_form;
pub mod gaussian_dynamics;
pub mod model;
pub mod pde_oracle;
pub mod quadrature;
pub mod transform_chain;

pub use closed_form::SolutionField;
pub use model::{FitnessSign, InitialDatum, Parameters, Survival, TailClass, ValidatedDatum};

/// Default relative tolerance for the quadratures behind every closed-form value.
pub const DEFAULT_TOL: f64 = 1e-11;

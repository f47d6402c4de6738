//! Chain-referral sampling on sparse stochastic block models.
//!
//! * [`sbm`]: parameters, offspring-matrix diagnostics, block sizes and explicit graphs.
//! * [`simulator`]: the referral Markov chain `(A_n, B_n, U_n)` sampled from its conditional laws.
//! * [`graph_walk`]: the same process on an explicit graph, for cross-validation.
//! * [`ode`]: the fluid-limit ODE, integrated with fixed-step RK4 and frozen at `t₀`.
//! * [`analysis`]: `d₁` path distance, Monte-Carlo ensembles, convergence sweeps, tables.
//!
//! The fluid-limit and distance code is generic over [`Real`] (`f32` or `f64`);
//! the aliases below fix the precision.

pub mod analysis;
pub mod graph_walk;
pub mod ode;
pub mod random;
pub mod sbm;
pub mod scalar;
pub mod simulator;

pub use scalar::{KahanSum, Real};

pub type FluidState64 = ode::FluidState<f64>;
pub type FluidState32 = ode::FluidState<f32>;
pub type FluidPath64 = ode::FluidPath<f64>;
pub type FluidPath32 = ode::FluidPath<f32>;
pub type FluidModel64 = ode::FluidModel<f64>;
pub type FluidModel32 = ode::FluidModel<f32>;
pub type RenormalizedPath64 = simulator::RenormalizedPath<f64>;
pub type RenormalizedPath32 = simulator::RenormalizedPath<f32>;

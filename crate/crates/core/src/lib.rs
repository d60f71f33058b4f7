//! Weak Poincaré inequality calculus for discrete-time Markov chains.
//!
//! The crate converts between WPI parametrizations (alpha, beta, K*),
//! computes subgeometric decay and mixing-time bounds from them, analyzes
//! finite chains exactly (Dirichlet forms, weak conductance profiles, decay,
//! lower bounds, pseudo-marginal lifts), carries both directions of the weak
//! Cheeger inequality, evaluates the explicit random-walk Metropolis bounds
//! for heavy-tailed targets, and runs seeded Monte Carlo simulations that
//! confront the analytic bounds.

pub mod chain;
pub mod cheeger;
pub mod error;
pub mod monotone;
pub mod quad;
pub mod rate;
pub mod rwm;
pub mod sim;
pub mod wpi;

pub use error::{Result, SubgeoError};
pub use monotone::{Direction, MonotoneFn, Tail};
pub use rate::RateFn;
pub use wpi::{DecayProfile, Sieve, WpiCertificate};

//! Simulation and verification toolkit for quenched limit behavior of
//! discrete Fourier transforms of stationary processes.
//!
//! The crate samples stationary real or complex processes (causal linear
//! filters of i.i.d. innovations, finite-state Markov functionals, and a
//! deterministic rotation on a cycle), evaluates their normalized DFTs at a
//! fixed frequency, and compares Monte Carlo distributions against
//! closed-form targets: spectral densities, complex Gaussian limits with
//! independent real and imaginary parts, martingale approximations, and a
//! calibrated construction whose conditionally centered DFT satisfies the
//! CLT while the uncentered one diverges along sparse block lengths.
//!
//! Everything randomized is driven by explicit seed material through
//! [`rng::Stream`], so identical configurations reproduce identical output
//! bytes regardless of thread count.

pub mod counterexample;
pub mod errors;
pub mod fourier;
pub mod martingale;
pub mod models;
pub mod quenched_lab;
pub mod rng;
pub mod spectral;
pub mod stats_kit;
pub mod tolerances;

pub use errors::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

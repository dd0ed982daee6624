//! Variational Monte Carlo simulation of open quantum spin dynamics.
//!
//! The Lindblad master equation for a dissipative long-range Ising chain is
//! unraveled into an ensemble of stochastic variational trajectories. Each
//! trajectory evolves the parameters of a wavefunction ansatz (RBM or
//! long-range Jastrow) under a stochastic Schrödinger equation in
//! Stratonovich form, driven by Monte Carlo estimates of the quantum
//! geometric tensor, force, and noise vectors. Ensemble averages of the
//! collective spin and the Wineland squeezing parameter are validated
//! against built-in exact oracles (closed-form solution at h = 0, dense
//! Lindblad and stochastic Schrödinger integration at small N).

pub mod ansatz;
pub mod config;
pub mod engine;
pub mod error;
pub mod integrator;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod output;
pub mod runner;
pub mod sampler;
pub mod spin;

pub use error::{Error, Result};
pub use spin::SpinConfiguration;

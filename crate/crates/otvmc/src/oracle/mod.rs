//! Reference solvers the variational results are validated against:
//! a closed-form solution for the dissipative Ising model without
//! transverse field, dense Lindblad integration, and dense stochastic
//! trajectories.

pub mod closed_form;
pub mod dense;
pub mod sse;

pub use closed_form::{closed_form_covariance, closed_form_magnetization, oracle_table};
pub use dense::{dense_lindblad_evolve, DenseOps, SpinMoments};
pub use sse::{dense_sse_ensemble, dense_sse_trajectory, SsePath, SseRecord};

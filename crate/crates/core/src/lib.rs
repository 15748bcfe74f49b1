//! Forward and inverse stochastic optimal control for linear systems.
//!
//! The crate covers two forward models, linear-quadratic Gaussian (LQG) control
//! and linear-quadratic sensorimotor (LQS) control with control- and
//! state-dependent noise, together with exact recursions for the mean and
//! covariance of the closed estimation-control loop. On top of these sits an
//! inverse solver that recovers cost weights and noise scales from moment
//! trajectories of the measured states by alternating grid-search bi-level
//! optimization.
//!
//! Module map:
//!
//! * [`model`]: problem data (system, cost, noise, parameter layout), the
//!   model file format and the planar reaching task.
//! * [`lqg`]: Riccati gains and moment propagation for the LQG loop.
//! * [`lqs`]: fixed-point gain iteration and moment propagation with
//!   signal-dependent noise.
//! * [`montecarlo`]: seeded rollouts of the loop and sample moments.
//! * [`objective`]: VAF metrics, the fitting objective and parameter errors.
//! * [`isoc`]: the grid search and the alternating inverse solver.
//! * [`io`]: CSV layouts for moments and trajectory batches.
//! * [`cli`]: the `isoc` command-line workflows.

pub mod cli;
pub mod error;
#[cfg(test)]
mod fixtures;
pub mod io;
pub mod isoc;
pub mod linalg;
pub mod lqg;
pub mod lqs;
pub mod model;
pub mod montecarlo;
pub mod objective;

pub use error::{Error, Result};

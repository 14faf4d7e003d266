//! Planar pushing with model-predictive control.
//!
//! The crate is `no_std` (it needs `alloc`) and contains the numerical core:
//!
//! * [`slider`]: quasi-static pusher-slider mechanics with an ellipsoidal
//!   limit surface and Coulomb contact modes.
//! * [`gp`]: exact Gaussian-process regression with an ARD squared-exponential
//!   kernel.
//! * [`learned`]: push dynamics driven by a trained GP.
//! * [`tracks`]: nominal trajectories for the figure-eight and square tracks.
//! * [`qp`]: a dense dual active-set QP solver.
//! * [`mpc`]: receding-horizon controllers for both models.
//! * [`sim`]: ground-truth simulation, data generation and closed-loop runs.
//!
//! File formats and the command-line driver live in the `pushmpc` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod gp;
pub mod learned;
pub mod mpc;
pub mod qp;
pub mod sim;
pub mod slider;
pub mod tracks;

pub use error::{Error, Result};

//! Deterministic laboratory for the epoch-periodic "sawtooth" loss pattern of
//! adaptive optimizers.
//!
//! The crate is `no_std` (it needs `alloc`) and carries only the numerics:
//!
//! * [`optim`]: Adam, RMSProp and SGD with momentum with every internal
//!   moment exposed.
//! * [`problem`]: the separable quadratic testbed and the two-batch toy problem.
//! * [`schedule`]: per-epoch sample ordering policies.
//! * [`trainer`]: the incremental training loop and its per-step probes.
//! * [`analysis`]: sawtooth metrics, least-squares fits of the intra-epoch
//!   dynamics models, the predicted loss curve and the n-shape sweep.
//!
//! IO, file formats and the command line live in the `sawtooth-lab` crate.
#![no_std]
#![warn(missing_docs)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
mod error;
pub mod optim;
pub mod problem;
pub mod schedule;
pub mod trainer;
pub(crate) mod vecmath;

pub use error::{Error, Result};

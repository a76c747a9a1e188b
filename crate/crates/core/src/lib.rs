//! Simulator for memristive in-memory computing.
//!
//! The crate is layered bottom-up:
//!
//! - [`devices`]: phenomenological non-volatile (and volatile) memory cells.
//! - [`crossbar`]: differential crossbar arrays performing analog MVM, plus tiling.
//! - [`cs`]: compressed sensing with AMP recovery on a crossbar-resident matrix.
//! - [`dnn`]: crossbar-backed feed-forward nets, mixed-precision training, drift studies.
//! - [`snn`]: LIF neurons, spike encoders, STDP and multi-memristive synapses.
//! - [`psnn`]: probabilistic GLM spiking networks trained with score-function gradients.
//! - [`reservoir`]: echo-state reservoirs with ridge readouts.
//! - [`harness`]: experiment configuration, registry and metrics emission.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crossbar;
pub mod cs;
pub mod devices;
pub mod dnn;
mod error;
pub mod linalg;
pub mod harness;
pub mod psnn;
pub mod reservoir;
pub mod rng;
pub mod snn;

pub use error::{Error, Result};

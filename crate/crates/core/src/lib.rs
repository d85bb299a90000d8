//! Movement-quality assessment from 3-D skeleton sequences.
//!
//! The crate is the numeric core of kinescore: a recorded-tape reverse-mode
//! autodiff engine over dense `f64` tensors, a spatio-temporal graph encoder
//! with a convolutional gated recurrent unit and data-dependent adjacency,
//! attention fusion of positional and angular streams, and a deterministic
//! training loop with Adam. Everything here is pure computation: no files,
//! no clocks, no threads. File formats and the CLI live in the companion
//! `kinescore-cli` crate.
//!
//! The crate is `no_std` (with `alloc`); hosts inject wall-clock time where
//! the training loop wants it.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod adam;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod params;
pub mod rng;
pub mod skeleton;
pub mod tape;
pub mod tensor;
pub mod topology;
pub mod train;

pub use error::{Error, Result};
pub use params::ParamStore;
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;

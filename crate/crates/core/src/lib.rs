//! Scattering theory for one-dimensional Schrödinger operators with steplike
//! potentials.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod numerics;
pub mod potential;
pub mod spectral;
pub mod stationary;
pub mod timedelay;
pub mod verify;

pub use error::{Error, Result};

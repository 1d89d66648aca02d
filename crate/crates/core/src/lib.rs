//! Planning core for spacecraft relative motion in the Clohessy-Wiltshire-Hill
//! frame under output feedback with Gaussian disturbances and sensor noise.
//!
//! Safe set-point hops are certified with chance-constrained admissible sets
//! built around forced equilibria; a virtual net of such equilibria is then
//! searched with Dijkstra's algorithm. Everything here is `no_std` + `alloc`;
//! file formats, the CLI and parallel drivers live in the `cwhnet` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
#[macro_use]
extern crate std;

pub mod admissible;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod net;
pub mod numerics;
pub mod sim;
pub mod synthesis;

pub use error::{Error, Result};

/// Dense, dynamically sized real matrix.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense, dynamically sized real column vector.
pub type Vector = nalgebra::DVector<f64>;

//! Compressible Euler equations in first-order and geometric wave-transport
//! form, with numerical verification of the wave-transport identities, their
//! null structure relative to the acoustical metric, and eikonal-based shock
//! detection.

// Index loops mirror the tensor notation; negated comparisons deliberately reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod eikonal;
pub mod eos;
pub mod error;
pub mod fields;
pub mod metric;
pub mod nullgeometry;
pub mod reformulation;
pub mod riemann;
pub mod solver;

pub use eos::EquationOfState;
pub use error::{Error, Result};
pub use fields::{FluidState, Grid};

//! Cavity-QED lineshape and decay models for a dephasing, spectrally
//! diffusing doublet emitter in a vibrating Fabry–Pérot cavity, together with
//! the global-fitting pipelines that extract the vacuum Rabi coupling.

// `!(x > 0.0)` is the idiom here for rejecting NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod envelope;
pub mod error;
pub mod fitting;
pub mod lineshape;
pub mod oracle;
pub mod quadrature;
pub mod quantities;
pub mod spectrum;
pub mod synthetic;

pub use error::{Error, Result};

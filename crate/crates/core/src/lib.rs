//! Moment flows of SDEs, their pushforward to exponential-family densities, and
//! the numerical checks that tie the two together.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod feynman_kac_mc;
pub mod generator_pde;
pub mod maxcal;
pub mod parameter_flow;
pub mod process;
pub mod stat_manifold;
mod stepping;

pub use error::{Error, Result};
pub use process::Process;

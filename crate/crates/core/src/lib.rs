//! Exact dense simulation of non-Hermitian spin reservoirs: spectra,
//! non-unitary state evolution, reservoir-computing benchmarks and a
//! probabilistic unitary emulation scheme.

// `!(x > y)` is used on purpose to catch NaN; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dynamics;
pub mod emulation;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod learning;
pub mod linalg;
pub mod oracles;
pub mod seeds;
pub mod spectral;
pub mod spin;

pub use error::{Error, Result};

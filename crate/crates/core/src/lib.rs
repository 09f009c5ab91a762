//! Semi-unbalanced optimal transport (SUOT) barycenters of Gaussian measures
//! on the Bures–Wasserstein manifold.
//!
//! `no_std` with `alloc`. File formats and the CLI live in `suot-harness`.

#![no_std]
// `!(x > 0.0)` guards are meant to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod barycenter;
pub mod bures;
pub mod error;
mod fmath;
pub mod gaussian;
pub mod oracle;
pub mod spd;
pub mod suot;

pub use error::{Result, SuotError};
pub use gaussian::GaussianMeasure;
pub use spd::{EigDecomp, SpdMatrix, SymMatrix};

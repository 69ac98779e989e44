#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Averaging operators along irregular paths and the Young ODEs they regularize.
//!
//! The crate samples fractional Brownian motion, evaluates oscillatory
//! integrals exactly on piecewise-linear paths, builds averaged vector fields,
//! solves nonlinear Young equations by Picard iteration and provides
//! Monte-Carlo checks of the associated moment bounds.

pub mod averaging;
pub mod dyadic;
pub mod error;
pub mod fbm;
pub mod field;
pub mod mollify;
pub mod oscillatory;
pub mod path;
pub mod quadrature;
pub mod solver;
pub mod stats;
pub mod young;

pub use error::{Error, Result};
pub use field::{Atom, FourierVectorField};
pub use oscillatory::Frequency;
pub use path::SampledPath;

/// Library version embedded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

//! Cross-section toolkit for the incompressible Navier-Stokes equations.
//!
//! A 3D problem is sliced by a hyperplane, the resulting three-component
//! auxiliary problem on the slice is solved with a Faedo-Galerkin sine
//! basis, and the run is checked against its energy balance, a Grönwall
//! contraction experiment and a pointwise quadratic-form criterion.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod fieldio;
pub mod galerkin;
pub mod geometry;
pub mod quadform;
pub mod stratify;

pub use error::{Error, Result};

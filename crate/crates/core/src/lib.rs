//! Mimetic finite differences for the parallel gradient on dual staggered
//! grids, with the wave and shear-Alfvén-wave models built on top.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod field;
pub mod grid;
pub mod linalg;
pub mod models;
pub mod operators;
pub mod sparse;
pub mod special;
pub mod timeint;

pub use error::{MfdError, Result};

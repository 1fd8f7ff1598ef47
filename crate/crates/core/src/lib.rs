//! Finite-difference model of a harpsichord soundboard: geometry, plate and
//! bar mechanics, impulse-response analysis and static string loading.

// NaN-rejecting comparisons and index loops over parallel arrays are intended.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod fdtd;
pub mod geometry;
pub mod materials;
pub mod statics;

pub use error::{Error, Result};


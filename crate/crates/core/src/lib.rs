//! Simulation and analysis toolkit for a lattice-cushioned inductive sensing
//! tile: pad mechanics, coil response, object dynamics, signal processing and
//! layout search.

// `!(x > 0.0)` is used on purpose so NaN inputs fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod guidance;
pub mod lattice;
pub mod map;
pub mod pipeline;
pub mod scenario_io;
pub mod sensing;

pub use error::{Error, Result};

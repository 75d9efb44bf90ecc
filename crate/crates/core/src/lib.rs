#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod ansatz;
pub mod energy;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod maximize;
pub mod model;
pub mod nonlinearity;
pub mod potential;
pub mod problem;
pub mod profile;
pub mod reduction;
pub mod registry;
pub mod system;
pub mod verify;

pub use error::{Error, Result};

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cone;
pub mod error;
pub mod export;
pub mod flow;
pub mod grid;
pub mod koopman;
pub mod linalg;
pub mod pf;
pub mod vectorfield;

pub use error::{Error, Result};
pub use grid::{Exec, Grid};
pub use vectorfield::SystemSpec;

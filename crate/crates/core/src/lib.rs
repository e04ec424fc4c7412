#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dataset;
pub mod error;
pub mod formulation;
pub mod lp;
pub mod mfa;
pub mod pathway;
pub mod scenario;
pub mod simplex;
pub mod system;
pub mod tsa;

pub use error::{Error, Result};

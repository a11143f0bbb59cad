// negated comparisons are how NaN gets rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod model;
pub mod spectral;
pub mod perturb;
pub mod gaussian;
pub mod metrology;
pub mod cli;

pub use error::{Error, Result};

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::inconsistent_digit_grouping, clippy::excessive_precision)]

pub mod conditional;
pub mod error;
pub mod excess;
pub mod gpd;
pub mod mcmc;
pub mod numeric;
pub mod posterior;
pub mod priors;
pub mod scedasis;
pub mod simlab;

pub use error::{Error, Result};

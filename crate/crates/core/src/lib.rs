#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod echo;
pub mod error;
pub mod experiment;
pub mod fim;
pub mod geometry;
pub mod par;
pub mod sdr;

pub use error::{Error, Result};

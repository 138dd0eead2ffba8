#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod conditional;
pub mod designs;
pub mod error;
pub mod kronecker;
pub mod model;
pub mod numerics;
pub mod stats;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};

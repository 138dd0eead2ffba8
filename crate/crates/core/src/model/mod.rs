//! The linear IV model reduced to its sufficient statistics.

mod data;
mod group;
mod reduced;

pub use data::{estimate_sigma_plugin, partial_out, reduce, IVDataset};
pub use group::{act, act_params, AlternativePoint, GroupElement};
pub(crate) use reduced::contract;
pub use reduced::{null_rotate, st_decompose, Hypothesis, NullRotated, ReducedForm, STDecomposition};

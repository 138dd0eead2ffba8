//! Test statistics.

mod closed_form;
pub mod frame;
mod il;
mod lr;
pub mod optimize;

pub use closed_form::{ar, lc, lm, lm_along, qlr, wald, StatValue};
pub(crate) use closed_form::{qlr_value, wald_parts};
pub use frame::{NodeCache, NullFrame, Workspace};
pub use il::{il, il0, il_original, IlEvaluator, IlWeight};
pub use lr::{lr, lr_dense, lr_equivalence_check, lr_in_frame, lr_naive, LROptConfig};

//! Simulated trusted runtime: id resolution, page permutation and shuffling.

mod memory;
mod runtime;

pub use crate::compiler::g;
pub use memory::{shuffle_page, DataMemory, PagePermuter};
pub use runtime::{AccessStats, Resolved, ShuffleEvent, ShufflePolicy, TeeError, TrustedRuntime};

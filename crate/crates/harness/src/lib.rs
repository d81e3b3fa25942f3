//! Experiment harness: shared simulation context, result tables and plots.

pub mod context;
pub mod error;
pub mod experiments;
pub mod plot;
pub mod stats;
pub mod table;

pub use context::SimContext;
pub use error::{HarnessError, Result};
pub use experiments::ExperimentId;
pub use table::ResultTable;

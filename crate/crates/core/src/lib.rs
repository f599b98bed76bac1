pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod prune;
pub mod search;
pub mod train;

pub use error::{CoreError, Result};

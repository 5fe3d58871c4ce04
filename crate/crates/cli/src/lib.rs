//! Command-line and REST front ends over `uibench_core`.

pub mod api;
pub mod cli;
pub mod error;

pub use api::router;
pub use error::ApiError;

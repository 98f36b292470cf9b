//! HTTP service, command line and file store for the grouping engine.

pub mod api;
pub mod cli;
pub mod store;

pub use api::{router, AppState};
pub use store::Store;

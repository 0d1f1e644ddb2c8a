//! HTTP API, batch runs and log tooling around the reflect-core session engine.

pub mod api;
pub mod batch;
pub mod cli;
pub mod eval;
pub mod setup;

pub use api::{router, API_VERSION};

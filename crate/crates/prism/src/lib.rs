//! File formats, HTTP backends and the command pipeline around `prism-core`.

pub mod backend;
pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod store;

pub use commands::{Artifacts, Engine, Overrides};
pub use config::{load_config, RunConfig};
pub use error::PrismError;

//! Configuration-driven runner for the coarse-graining experiments.

pub mod cache;
pub mod config;
pub mod report;
pub mod run;

pub use cache::{cache_key, Cache, CacheEntry};
pub use config::{parse_config, Command, ConfigError, RunConfig};
pub use run::{run, Outcome, RunError};

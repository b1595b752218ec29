//! Configuration files, CSV records, reports and scenario orchestration for
//! `thyreg-core`.

pub mod config;
pub mod record;
pub mod report;

pub use config::{Config, ConfigError, ConfigFile, DEFAULT_TOML};

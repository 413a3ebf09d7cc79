//! Everything the `dsc` binary does, as a library: the config format,
//! checkpoint and corpus-cache files, and the command implementations.

pub mod cache;
pub mod checkpoint;
pub mod commands;
pub mod config;

pub use checkpoint::Checkpoint;
pub use config::ModelConfig;

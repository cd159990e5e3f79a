//! File formats, configuration and command pipelines on top of
//! `crtrack-core`.
//!
//! The `crtrack` binary is a thin argument parser over [`commands`]; each
//! subcommand is also callable as a library function.

pub mod batch_files;
pub mod commands;
pub mod config;
pub mod emb;
pub mod error;
pub mod image_io;
pub mod mot;

pub use config::Settings;
pub use error::{IoError, Result};

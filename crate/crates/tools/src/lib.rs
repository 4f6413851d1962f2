//! File formats, a thread-pool executor and the batch pipeline built on
//! `regime-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod exec;
pub mod formats;
pub mod oracle;

pub use error::{Result, ToolError};

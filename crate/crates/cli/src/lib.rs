//! Command implementations behind the `corrcast` binary.

pub mod commands;
pub mod config;
pub mod store;

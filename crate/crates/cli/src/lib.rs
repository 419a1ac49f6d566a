//! Batch front-end: TOML experiment configs in, CSV tables and a JSON
//! summary out.

pub mod commands;
pub mod config;
pub mod error;
pub mod record;

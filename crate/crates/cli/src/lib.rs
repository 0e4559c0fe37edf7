//! Library surface of the `fewshot` CLI, exposed so integration tests
//! drive commands in-process.

pub mod commands;
pub mod config;
pub mod manifest;

pub use config::{RunConfig, OUT_ROOT_ENV};

//! Configuration, provenance and subcommands of the `robin` driver.

pub mod build;
pub mod commands;
pub mod config;
pub mod provenance;

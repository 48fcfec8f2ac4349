//! Batch pipeline around the seaplume library: file-based stages wired
//! into subcommands, each rerunnable and byte-deterministic given the same
//! config and seed.

pub mod commands;
pub mod config;
pub mod lock;

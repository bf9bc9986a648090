//! `obsolens` command-line tool: corpus queries, trend statistics,
//! obsolescence reports and the local annotation service.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod server;
pub mod session;

pub use commands::run;

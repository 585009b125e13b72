//! Command-line tool and HTTP service around `lazylint-core`.

pub mod app;
pub mod cli;
pub mod config;
pub mod error;
pub mod server;

//! Reference oracle, convergence tables, export formats, configuration and CLI.

pub mod cli;
pub mod config;
pub mod convergence;
pub mod export;
pub mod reference;

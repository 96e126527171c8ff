//! Command line and HTTP service on top of the `mixlr` library.

pub mod cli;
pub mod service;

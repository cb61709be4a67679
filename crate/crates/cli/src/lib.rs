//! File formats, CLI commands, and the HTTP routing service around
//! `costroute-core`.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod dataset;
pub mod pool;
pub mod service;
pub mod trainlog;

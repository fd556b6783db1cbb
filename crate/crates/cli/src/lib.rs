//! Experiment driver: config files, sweeps, single solves and the check
//! suites.

pub mod checks;
pub mod commands;
pub mod config;
pub mod output;

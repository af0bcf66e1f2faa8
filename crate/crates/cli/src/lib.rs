//! Command-line front end for the long-range percolation experiments.

pub mod app;
pub mod checks;
pub mod commands;
pub mod config;
pub mod output;
pub mod report;

//! Front end for the Hele-Shaw simulator: configuration, experiment
//! commands and table output.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

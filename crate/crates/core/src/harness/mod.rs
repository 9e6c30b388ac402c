//! Experiment orchestration behind the `camab` command-line tool.

mod commands;
mod config;
mod csv;
mod pilot;

pub use commands::*;
pub use config::*;
pub use csv::{fmt_g, CsvTable};
pub use pilot::{pilot_cache_key, pilot_means, PilotCache};

//! File formats and the `drape` command-line tool.

pub mod cli;
pub mod error;
pub mod formats;
pub mod obj;

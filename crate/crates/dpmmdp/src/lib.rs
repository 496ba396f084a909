//! File formats, sweep runner and command-line interface on top of
//! [`dpmmdp_core`].

pub mod catalog;
pub mod cli;
pub mod error;
pub mod format;
pub mod output;
pub mod sweep;

pub use error::{Error, Result};

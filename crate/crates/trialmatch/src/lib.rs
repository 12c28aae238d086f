//! File formats, chat backends, run directories, the annotation service
//! and the `trialmatch` command line, built on `trialmatch-core`.

pub mod backend;
pub mod cli;
pub mod distill;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod manifest;
pub mod pool;
pub mod run;
pub mod service;

pub use error::{CliError, FailureClass};

//! Front end of the `scan3d` binary: argument handling, command execution,
//! output rendering and the published reference tables.

pub mod args;
pub mod output;
pub mod run;
pub mod tables;

pub use run::{main_with_args, ExitCode};

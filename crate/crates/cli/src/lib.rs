//! Configuration parsing, run dispatch and report writing for the `simpleq` binary.

pub mod config;
pub mod report;

pub use config::{parse_config, Mode, OutputFormat, RunConfig};
pub use report::{emit, render, run, ReportBundle};

//! IO companion to `densefit-core`: binary model/image formats, dataset
//! generation and layout, and the subcommand implementations behind the
//! `densefit` binary.

pub mod dataset;
pub mod error;
pub mod formats;
pub mod run;

pub use error::CliError;

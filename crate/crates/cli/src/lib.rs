//! End-to-end pipeline around the `clsketch` library: dataset generation,
//! sketching, decoding, evaluation, sweeps with CSV and SVG output, and the
//! theory diagnostics.

pub mod commands;
pub mod error;
pub mod pipeline;
pub mod svg;
pub mod sweep;

pub use error::{CliError, CliResult};

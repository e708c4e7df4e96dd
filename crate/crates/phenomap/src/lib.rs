//! File formats, artifact persistence, parallel execution, the command line
//! and the HTTP service around `phenomap-core`.

pub mod artifact;
pub mod cli;
pub mod error;
pub mod io;
pub mod parallel;
pub mod pipeline;
pub mod report;
pub mod schema;
pub mod service;

pub use error::{PipelineError, Result};

//! JSON pipelines over the multi-relational algebra engine.
//!
//! A document lists CSV sources, operator steps and sinks. [`Pipeline::parse`]
//! checks it completely before anything runs; [`run()`] executes it.

pub mod doc;
pub mod error;
pub mod ops;
pub mod run;

pub use doc::{Pipeline, SchemaHandle, Sink, Source, Step};
pub use error::{PipelineError, Result, EXIT_BENCH_MISMATCH, EXIT_RUNTIME, EXIT_VALIDATION};
pub use ops::{Binding, Kind, Op, OPS};
pub use run::{bench, explain, run, RunOptions, RunReport};

use std::path::Path;

/// Reads and parses a document from disk.
pub fn load(path: &Path) -> Result<Pipeline> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
    Pipeline::parse(&text)
}

/// Directory that relative source paths are resolved against.
pub fn base_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

use thiserror::Error;

/// Exit code for documents rejected before execution.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code for failures while executing a valid document.
pub const EXIT_RUNTIME: i32 = 3;
/// Exit code for `bench` runs whose strategies disagree.
pub const EXIT_BENCH_MISMATCH: i32 = 4;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("unsupported version {0}, expected 1")]
    UnsupportedVersion(u64),
    #[error("step {step}: unknown operator `{op}`{}", hint.as_ref().map(|h| format!(", did you mean `{h}`?")).unwrap_or_default())]
    UnknownOperator { step: usize, op: String, hint: Option<String> },
    #[error("{}: `{name}` is not bound by any source or step", place(*step))]
    UnboundInput { step: Option<usize>, name: String },
    #[error("bindings form a cycle through `{0}`")]
    CyclicBinding(String),
    #[error("step {step} ({op}): unknown schema handle `{name}`")]
    UnknownSchemaHandle { step: usize, op: String, name: String },
    #[error("{what} `{name}` is defined more than once")]
    Duplicate { what: &'static str, name: String },
    #[error("step {step} ({op}): {message}")]
    InvalidArguments { step: usize, op: String, message: String },
    #[error("step {step} ({op}): {message}")]
    KindMismatch { step: usize, op: String, message: String },
    #[error("source `{name}`: {source}")]
    Source { name: String, source: mra_core::Error },
    #[error("step {step} ({op}): {source}")]
    Step { step: usize, op: String, source: mra_core::Error },
    #[error("sink `{binding}`: {message}")]
    Sink { binding: String, message: String },
    #[error("{0}")]
    Io(String),
    #[error("strategies {a} and {b} disagree on `{binding}`")]
    BenchMismatch { binding: String, a: String, b: String },
}

fn place(step: Option<usize>) -> String {
    match step {
        Some(i) => format!("step {i}"),
        None => "sink".into(),
    }
}

impl PipelineError {
    /// Stable name of the error class.
    pub fn class(&self) -> &'static str {
        match self {
            PipelineError::Parse { .. } => "ParseError",
            PipelineError::UnsupportedVersion(_) => "UnsupportedVersion",
            PipelineError::UnknownOperator { .. } => "UnknownOperator",
            PipelineError::UnboundInput { .. } => "UnboundInput",
            PipelineError::CyclicBinding(_) => "CyclicBinding",
            PipelineError::UnknownSchemaHandle { .. } => "UnknownSchemaHandle",
            PipelineError::Duplicate { .. } => "DuplicateName",
            PipelineError::InvalidArguments { .. } => "InvalidArguments",
            PipelineError::KindMismatch { .. } => "KindMismatch",
            PipelineError::Source { .. } => "SourceError",
            PipelineError::Step { .. } => "StepError",
            PipelineError::Sink { .. } => "SinkError",
            PipelineError::Io(_) => "IoError",
            PipelineError::BenchMismatch { .. } => "BenchMismatch",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Source { .. }
            | PipelineError::Step { .. }
            | PipelineError::Sink { .. }
            | PipelineError::Io(_) => EXIT_RUNTIME,
            PipelineError::BenchMismatch { .. } => EXIT_BENCH_MISMATCH,
            _ => EXIT_VALIDATION,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

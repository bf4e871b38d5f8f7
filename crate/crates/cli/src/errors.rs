use std::fmt;

use concept_lens::decompose::DecomposeError;
use concept_lens::eval::EvalError;
use concept_lens::projection::ProjectionError;
use concept_lens::solver::SolverError;
use concept_lens::store::StoreError;
use concept_lens::synth::SynthError;
use concept_lens::vocab::VocabError;
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad flags, bad input data, or a request the inputs cannot satisfy.
    Validation,
    /// I/O failures and numerical breakdowns.
    Runtime,
}

impl ErrorKind {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Validation => 2,
            ErrorKind::Runtime => 1,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Validation => "validation",
            ErrorKind::Runtime => "runtime",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind.as_str(), self.message)
    }
}

impl std::error::Error for CliError {}

/// A user-input problem found by the command layer itself.
#[derive(Debug)]
pub(crate) struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub(crate) fn invalid(message: impl Into<String>) -> anyhow::Error {
    Invalid(message.into()).into()
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Validation,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Runtime,
            message: message.into(),
        }
    }

    pub fn from_anyhow(err: &anyhow::Error) -> Self {
        Self {
            kind: classify(err),
            message: format!("{err:#}"),
        }
    }

    /// Prints the error JSON line to standard error and returns the exit code.
    pub fn emit(&self) -> u8 {
        eprintln!(
            "{}",
            json!({"level": "error", "kind": self.kind.as_str(), "message": self.message})
        );
        self.kind.exit_code()
    }
}

fn classify(err: &anyhow::Error) -> ErrorKind {
    use ErrorKind::*;
    if err.downcast_ref::<Invalid>().is_some() {
        return Validation;
    }
    if let Some(e) = err.downcast_ref::<EvalError>() {
        return eval_kind(e);
    }
    if let Some(e) = err.downcast_ref::<VocabError>() {
        return vocab_kind(e);
    }
    if let Some(e) = err.downcast_ref::<ProjectionError>() {
        return projection_kind(e);
    }
    if let Some(e) = err.downcast_ref::<DecomposeError>() {
        return decompose_kind(e);
    }
    if let Some(e) = err.downcast_ref::<SynthError>() {
        return match e {
            SynthError::Config(_) => Validation,
            SynthError::Store(s) => store_kind(s),
            SynthError::Vocab(v) => vocab_kind(v),
        };
    }
    if let Some(e) = err.downcast_ref::<StoreError>() {
        return store_kind(e);
    }
    if err.downcast_ref::<SolverError>().is_some() {
        return Validation;
    }
    Runtime
}

fn store_kind(e: &StoreError) -> ErrorKind {
    match e {
        StoreError::Io { .. } => ErrorKind::Runtime,
        _ => ErrorKind::Validation,
    }
}

fn vocab_kind(e: &VocabError) -> ErrorKind {
    match e {
        VocabError::Store(s) => store_kind(s),
        _ => ErrorKind::Validation,
    }
}

fn decompose_kind(e: &DecomposeError) -> ErrorKind {
    match e {
        DecomposeError::Store(s) => store_kind(s),
        _ => ErrorKind::Validation,
    }
}

fn eval_kind(e: &EvalError) -> ErrorKind {
    match e {
        EvalError::Store(s) => store_kind(s),
        EvalError::Vocab(v) => vocab_kind(v),
        EvalError::Decompose(d) => decompose_kind(d),
        EvalError::Bootstrap(_) => ErrorKind::Runtime,
        _ => ErrorKind::Validation,
    }
}

fn projection_kind(e: &ProjectionError) -> ErrorKind {
    match e {
        ProjectionError::Store(s) => store_kind(s),
        ProjectionError::Decompose(d) => decompose_kind(d),
        ProjectionError::Diverged { .. } | ProjectionError::AllSkipped => ErrorKind::Runtime,
        _ => ErrorKind::Validation,
    }
}

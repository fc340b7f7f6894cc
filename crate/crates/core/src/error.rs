use std::fmt;

use thiserror::Error;

/// Errors raised by the library.
///
/// Parameter, domain and capacity errors are caller mistakes. [`Error::Failure`]
/// wraps a legitimate random outcome of a trial (a stage that did not succeed on
/// this sample) and is what the harness counts.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("{what}: n = {n} exceeds the exact-mode limit {limit}")]
    Capacity {
        what: &'static str,
        n: usize,
        limit: usize,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("structural error: {0}")]
    Structural(String),
    #[error("internal contract violated: {0}")]
    Contract(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("trial failure: {0}")]
    Failure(#[from] Failure),
}

impl Error {
    pub fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, Error::Failure(_))
    }

    pub fn failure(&self) -> Option<&Failure> {
        match self {
            Error::Failure(f) => Some(f),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which item of the EXPAND membership test failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpandItem {
    Size,
    DegreeBand,
    Expansion,
}

impl fmt::Display for ExpandItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExpandItem::Size => "size",
            ExpandItem::DegreeBand => "degree-band",
            ExpandItem::Expansion => "expansion",
        })
    }
}

/// A stage of a randomized procedure that did not succeed on this sample.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Failure {
    #[error("sparsify: {found} allowed colours survived, {needed} needed")]
    Sparsify { found: usize, needed: usize },
    #[error("expander: item {item} failed ({detail})")]
    Expander { item: ExpandItem, detail: String },
    #[error("root-edges: {found} reservoir-coloured edges, {needed} needed")]
    RootEdges { found: usize, needed: usize },
    #[error("embed: placed {placed} of {total} tree nodes")]
    Embed { placed: usize, total: usize },
    #[error("colours: {available} available colours, at least {required} required")]
    Colours { available: usize, required: usize },
    #[error("blocks: vertex blocks need {required} vertices, only {n} exist")]
    Blocks { required: usize, n: usize },
    #[error("partition: degree bounds not met after {attempts} attempts")]
    Partition { attempts: usize },
    #[error("absorb: step {step}: {reason}")]
    Absorb { step: usize, reason: String },
    #[error("seed-degree: {detail}")]
    SeedDegree { detail: String },
}

impl Failure {
    /// Short stage name used in traces and CSV records.
    pub fn stage(&self) -> &'static str {
        match self {
            Failure::Sparsify { .. } => "sparsify",
            Failure::Expander { .. } => "expander",
            Failure::RootEdges { .. } => "root-edges",
            Failure::Embed { .. } => "embed",
            Failure::Colours { .. } => "colours",
            Failure::Blocks { .. } => "blocks",
            Failure::Partition { .. } => "partition",
            Failure::Absorb { .. } => "absorb",
            Failure::SeedDegree { .. } => "seed-degree",
        }
    }
}

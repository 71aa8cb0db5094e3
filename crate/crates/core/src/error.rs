use std::path::PathBuf;

use crate::automaton::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid automaton: {}", join(.0))]
    InvalidDfa(Vec<Violation>),

    #[error("unknown environment `{0}`")]
    UnknownEnv(String),

    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),

    #[error("action {action} out of range for {n_actions} actions")]
    InvalidAction { action: usize, n_actions: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("non-finite value {value} in {context}")]
    NonFinite { context: &'static str, value: f64 },

    #[error("teacher on `{env}` never completed an episode in {episodes} episodes")]
    TeacherIncompetent { env: String, episodes: u32 },

    #[error("teacher never triggered automaton edges: {}", .0.join(", "))]
    UncoveredEdges(Vec<String>),

    #[error("teacher never visited automaton states: {}", .0.join(", "))]
    UnvisitedStates(Vec<String>),

    #[error("knowledge does not match environment automaton: {0}")]
    KnowledgeMismatch(String),

    #[error("variant `{0}` requires teacher knowledge")]
    MissingKnowledge(String),

    #[error("unknown variant preset `{0}`")]
    UnknownPreset(String),

    #[error("update bound violated at episode {episode}, step {step}: |dQ| = {delta} > {bound}")]
    BoundViolation {
        episode: u32,
        step: u32,
        delta: f64,
        bound: f64,
    },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: String, expected: String },

    #[error("corrupted file {path}: {reason}")]
    Corrupted { path: PathBuf, reason: String },

    #[error("invalid knowledge: {0}")]
    InvalidKnowledge(String),

    #[error("aggregation error: {0}")]
    Aggregate(String),

    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

//! Color-matching random walk graph kernels with learnable hidden graphs.
//!
//! The crate revolves around one idea: a random walk kernel between an input
//! graph and a small *hidden* graph whose adjacency and node features are
//! free parameters. Walks are scored so that node colors must match at
//! **every** step (not just at the endpoints), which makes the learned hidden
//! graphs interpretable as frequent colored substructures of a database.
//!
//! The main pieces:
//!
//! * [`graph`] — attributed graphs, product-graph constructions, degree
//!   normalization, and deterministic JSON (de)serialization.
//! * [`kernels`] — the kernel family: the classical labeled walk kernel, the
//!   endpoint-only kernel and its `d×d` rewrite, and the color-matching
//!   kernel in both its product-graph form and the fast `O(em + nm²)` form.
//! * [`learn`] — hidden graphs, the unsupervised mining objective with
//!   diversity and sparsity regularizers, hand-derived reverse-mode
//!   gradients, SGD with momentum, and the restart-based training driver.
//! * [`conv`] — a graph convolution layer built on the fast kernel loop that
//!   emits per-node walk scores instead of a pooled scalar.
//! * [`oracle`] — brute-force reference implementations (walk enumeration,
//!   finite differences, exhaustive edit distance) used to validate the
//!   optimized paths.
//! * [`testbed`] / [`eval`] — synthetic labeled-graph databases with known
//!   ground-truth patterns, and the evaluation suite (binarization, matching
//!   accuracy, graph edit distance, paired t-tests).
//! * [`profiles`] — tuned training presets for each bundled testbed, the
//!   configurations exercised by the acceptance suite and the CLI.
//! * [`perf`] — wall-clock scaling measurements for the fast-vs-naive paths.
//!
//! With the default `parallel` feature the per-graph and per-restart loops
//! run on rayon; results are collected in index order and reduced
//! sequentially, so outputs are bit-identical with or without the feature.

use thiserror::Error;

pub mod conv;
pub mod eval;
pub mod graph;
pub mod kernels;
pub mod learn;
pub mod oracle;
pub mod par;
pub mod perf;
pub mod profiles;
pub mod testbed;

/// Crate-wide error type.
///
/// The variants correspond to the process exit codes used by the CLI:
/// validation/usage problems (2), numeric failures (3), and resource guards
/// (4).
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid input data, configuration, or API misuse.
    #[error("validation error: {0}")]
    Validation(String),

    /// A computation produced NaN/Inf or failed to converge.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An operation would exceed a configured size or time guard.
    #[error("resource guard: {0}")]
    Resource(String),

    /// Filesystem I/O failure, annotated with the offending path.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization failure, annotated with the offending path.
    #[error("json error on {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn resource(msg: impl Into<String>) -> Self {
        Error::Resource(msg.into())
    }

    /// Exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Io { .. } | Error::Json { .. } => 2,
            Error::Numeric(_) => 3,
            Error::Resource(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use std::path::PathBuf;

/// Errors raised by the numerical core, the optimizers and the file formats.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {block}: expected {expected_rows}x{expected_cols}, found {rows}x{cols}")]
    Dimension {
        block: String,
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("D22 must be exactly zero (feed-through from control to measurement is not supported){}", level_suffix(*.level))]
    NonzeroD22 { level: Option<usize> },

    #[error("matrix pencil sE - A is singular at every regularity probe")]
    IrregularPencil,

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    #[error("design vector has length {found}, the controller layout requires {expected}")]
    Layout { expected: usize, found: usize },

    #[error("shifted pencil sE - A is singular at s = {re} + {im}i")]
    SingularShift { re: f64, im: f64 },

    #[error("nilpotent-only pencil: no finite generalized eigenvalues")]
    NoFiniteEigenvalues,

    #[error("eigenvector normalization broke down (|w^H E v| = {0:e}); the rightmost eigenvalue looks defective")]
    Defective(f64),

    #[error("eigenvalue iteration did not converge")]
    EigenFailure,

    #[error("improper or polynomial part: the frequency response keeps growing beyond omega = {omega:e}")]
    Improper { omega: f64 },

    #[error("gradient undefined for unstable loop")]
    UnstableGradient,

    #[error("finite-difference probe is infinite at coordinate {index}")]
    FdInfinite { index: usize },

    #[error("convex hull needs at least one generator")]
    EmptyHull,

    #[error("hull generator {index} has a non-finite entry")]
    NonFiniteGenerator { index: usize },

    #[error("objective is infinite at the starting point; call stabilize first")]
    InfiniteStart,

    #[error("stabilization failed: spectral abscissa {h:e} after {iters} iterations")]
    StabilizationFailed { h: f64, iters: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("hierarchy levels {first} and {second} disagree on {what} ({a} vs {b})")]
    LevelMismatch {
        first: usize,
        second: usize,
        what: &'static str,
        a: usize,
        b: usize,
    },

    #[error("level index {level} outside 1..={levels}")]
    LevelIndex { level: usize, levels: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
}

fn level_suffix(level: Option<usize>) -> String {
    match level {
        Some(l) => format!(" (level {l})"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(block: impl Into<String>, expected: (usize, usize), found: (usize, usize)) -> Self {
        Error::Dimension {
            block: block.into(),
            expected_rows: expected.0,
            expected_cols: expected.1,
            rows: found.0,
            cols: found.1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

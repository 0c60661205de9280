use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("degenerate spectrum: {0}")]
    Degenerate(String),

    /// The point is not confined, so no cyclic states exist.
    #[error("no cyclic motions: {0}")]
    NoCyclicStates(String),

    #[error("ambiguous mode pairing (best overlap {best:.6}, runner-up {runner_up:.6}); refine the sweep step")]
    AmbiguousTracking { best: f64, runner_up: f64 },

    #[error("classification changes {crossings} times along the segment; subdivide it")]
    MultiCrossing { crossings: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("propagation overflowed; growth exponent {exponent:.6e}")]
    Saturation { exponent: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Precondition(_) | Error::Config(_) => 2,
            Error::Numerical(_)
            | Error::Degenerate(_)
            | Error::AmbiguousTracking { .. }
            | Error::MultiCrossing { .. }
            | Error::Saturation { .. } => 3,
            Error::NoCyclicStates(_) => 4,
            Error::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

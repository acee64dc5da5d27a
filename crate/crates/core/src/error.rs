use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("state is not normalized (norm = {0})")]
    Unnormalized(f64),

    /// Probability mass reached the edge of the periodic grid (position) or
    /// the edge of the momentum window.
    #[error("wavefunction leaked to the {region} edge at t = {t}: edge mass {edge_mass:e}")]
    Leaked {
        region: &'static str,
        t: f64,
        edge_mass: f64,
    },

    #[error("trajectory diverged at t = {0}")]
    Diverged(f64),

    #[error("lyapunov estimate: {0}")]
    Lyapunov(String),

    #[error("record: {0}")]
    Record(String),

    #[error("config line {line}: {msg}", line = .line.map_or("-".to_string(), |l| l.to_string()))]
    Config { line: Option<usize>, msg: String },

    /// Some trajectories of an ensemble failed; the others were written.
    #[error("trajectories {failed:?} failed; first failure: {first}")]
    Ensemble { failed: Vec<usize>, first: Box<Error> },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Config {
            line,
            msg: msg.into(),
        }
    }

    /// True for failures of the numerics (leak, divergence, estimator
    /// breakdown) as opposed to bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        if let Error::Ensemble { first, .. } = self {
            return first.is_numerical();
        }
        matches!(
            self,
            Error::Leaked { .. }
                | Error::Diverged(_)
                | Error::ZeroNorm
                | Error::Unnormalized(_)
                | Error::Lyapunov(_)
        )
    }

    pub fn is_config(&self) -> bool {
        if let Error::Ensemble { first, .. } = self {
            return first.is_config();
        }
        matches!(self, Error::Config { .. } | Error::InvalidParameter(_) | Error::InvalidGrid(_))
    }
}

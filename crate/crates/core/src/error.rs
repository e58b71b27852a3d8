use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("coupling strength must lie in (0, sqrt(3)), got {0}")]
    InvalidCoupling(f64),

    /// A (coupling, propagation constant, branch) triple outside the admissible set.
    #[error("invalid soliton parameters: {0}")]
    InvalidSpec(String),

    #[error("{what} must lie in {range}, got {value}")]
    OutOfRange {
        what: &'static str,
        range: String,
        value: f64,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid function has zero mass")]
    ZeroMass,

    #[error("target mass {target} is not attainable on the {branch} branch (range {lo} .. {hi}, fold mass {fold_mass})")]
    MassOutOfRange {
        target: f64,
        branch: &'static str,
        lo: f64,
        hi: f64,
        fold_mass: f64,
    },

    #[error("radicand {0:e} is negative: profile left its admissible range")]
    NegativeRadicand(f64),

    #[error("linear system is not positive definite at row {row} (pivot {pivot:e}); reduce dt")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("quadrature failed to converge: estimated error {0:e}")]
    Quadrature(f64),
}

impl Error {
    pub(crate) fn out_of_range(what: &'static str, range: impl Into<String>, value: f64) -> Self {
        Error::OutOfRange {
            what,
            range: range.into(),
            value,
        }
    }

    /// True for errors caused by bad input rather than numerical breakdown.
    pub fn is_usage(&self) -> bool {
        !matches!(
            self,
            Error::SingularSystem { .. } | Error::Quadrature(_) | Error::NegativeRadicand(_)
        )
    }
}

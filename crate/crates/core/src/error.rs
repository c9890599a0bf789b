use thiserror::Error;

/// Errors from the core crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{0} must be positive")]
    EmptyDimension(&'static str),

    #[error("`{name}` has {got} entries, expected {expected}")]
    Shape {
        name: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in `{0}`")]
    NonFinite(&'static str),

    #[error("bernoulli noise requires means in [0, 1], found {value} in `{name}`")]
    BernoulliRange { name: &'static str, value: f64 },

    #[error("invalid noise scale {0}")]
    NoiseScale(f64),

    #[error("{what} index {index} out of range (size {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("`{0}` is not a probability distribution")]
    NotADistribution(&'static str),

    #[error("occupancy measure violates {0}")]
    Occupancy(String),

    #[error("enumeration needs {needed} policies, cap is {cap}")]
    EnumerationCap { needed: u128, cap: u128 },

    #[error("follower threshold {threshold} is above the achievable value {achievable}")]
    ThresholdUnreachable { threshold: f64, achievable: f64 },

    #[error("linear program is {0}")]
    Lp(crate::lp::LpStatus),

    #[error("numerical breakdown in simplex: {0}")]
    Numerical(String),

    #[error("singular design matrix")]
    SingularDesign,

    #[error("malformed transition tuple: {0}")]
    MalformedTuple(String),

    #[error("sampler failure: {0}")]
    Sampler(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_index(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index < len {
        Ok(())
    } else {
        Err(Error::Index { what, index, len })
    }
}

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}

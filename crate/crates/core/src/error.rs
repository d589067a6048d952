use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown mode label `{0}`")]
    UnknownMode(String),

    #[error("duplicate mode label `{0}`")]
    DuplicateMode(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operands live on different mode spaces")]
    SpaceMismatch,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid density state: {0}")]
    InvalidState(String),

    #[error("singular coupling denominator: |{which}| = {value:e} is below the 1e-9 nu guard")]
    SingularDenominator { which: &'static str, value: f64 },

    #[error("periodic regime requires |chi2| > |chi1| (r = {r})")]
    NotPeriodic { r: f64 },

    #[error("map is not symplectic: deviation {deviation:e}")]
    NotSymplectic { deviation: f64 },

    #[error("recoil pattern is not normalized: integral = {integral}")]
    RecoilNormalization { integral: f64 },

    #[error("step size underflow at t = {t} (dt = {dt:e})")]
    StepUnderflow { t: f64, dt: f64 },

    #[error("truncation insufficient: top-level population {population:e} in mode `{mode}`")]
    TruncationInsufficient { mode: String, population: f64 },

    #[error("regime violated: {0}")]
    RegimeViolation(String),

    #[error("no root with r > 1 for tanh = {tanh}")]
    NoEntangledRoot { tanh: f64 },
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

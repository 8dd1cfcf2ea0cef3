use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("{value} is not a unit modulo {modulus}")]
    NotAUnit { value: String, modulus: u64 },

    /// The prime is too small for some exact coefficient: it divides a denominator.
    #[error("denominator {denominator} is not invertible modulo {modulus}")]
    DenominatorNotInvertible { denominator: String, modulus: u64 },

    #[error("invalid modulus: {0}")]
    InvalidModulus(String),

    #[error("index {k} is outside the Bernoulli table for p = {p}")]
    IndexOutOfTable { k: u32, p: u64 },

    #[error("work budget exceeded: estimated {estimated} operations against a budget of {budget}")]
    WorkBudgetExceeded { estimated: u128, budget: u128 },

    #[error("gap count g = {g} is outside 1..={max}")]
    InvalidGapCount { g: u32, max: u32 },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("no displayed closed form for m = {0} (supported: 1..=6)")]
    UnsupportedM(u32),

    #[error("interpolated polynomial for {monomial} disagrees with the closed form at m = {m}")]
    InterpolationMismatch { monomial: String, m: u32 },

    #[error("unknown lemma name {0:?}")]
    UnknownLemmaName(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bernoulli cache: {0}")]
    Cache(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Cache(err.to_string())
    }
}

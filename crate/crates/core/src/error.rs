use num_bigint::BigUint;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("zero has no canonical factorization")]
    Zero,

    #[error("{op} requires n >= 2 (log n vanishes at n = 1)")]
    UnitInput { op: &'static str },

    #[error("cannot factor composite cofactor {0}: exceeds 64 bits")]
    FactorizationUnsupported(BigUint),

    #[error("invalid factorization: {0}")]
    InvalidFactorization(String),

    #[error("tau(n) = {tau} exceeds the {what} cap of {cap}")]
    CapExceeded {
        what: &'static str,
        tau: u64,
        cap: u64,
    },

    #[error("n^tau(n) needs {bits} bits, over the cap of {cap} bits")]
    BitSizeCapExceeded { bits: u64, cap: u64 },

    #[error("{name} = {value} is out of range: {expected}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("no prime in [{lo}, {hi}] avoiding the base primes (epsilon widened to {epsilon})")]
    PrimeSearchExhausted {
        lo: BigUint,
        hi: BigUint,
        epsilon: f64,
    },

    #[error("invariant violated at n = {n}: {message}")]
    Invariant { n: BigUint, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

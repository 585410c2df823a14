//! Vandermonde determinant of the divisors of an integer.
//!
//! For `n >= 1` with sorted divisors `1 = d_1 < ... < d_t = n`, this crate computes
//!
//! ```text
//! V(n)  = prod_{i < j} (d_j - d_i)
//! S(n)  = sum_i (i - 1) log d_i
//! S*(n) = sum_i (t - i) log d_i
//! ```
//!
//! together with the divisor statistics around them (dyadic concentration,
//! the count of divisors far from `sqrt(n)`, prime-power shares of `log n`),
//! exact checks of the classical divisor-log identities, and the `N = p * n`
//! construction that pushes `S(N) / (tau(N)^2 log N)` toward any point of
//! `[1/4, 3/8]`.
//!
//! All logarithms are natural.

pub mod arith;
pub mod cli;
pub mod divisors;
pub mod error;
pub mod identities;
pub mod limitpoints;
pub mod scan;
pub mod sum;
pub mod vandermonde;

pub use arith::{factor, factor_u64, is_probable_prime, Factorization, PrimePower, PrimeTable};
pub use divisors::{dyadic_concentration, j_delta, ConcentrationReport, DivisorList};
pub use error::{Error, Result};
pub use identities::{
    check_eq1_exact, lemma3_lhs_form, lemma3_rhs_form, verify_lemma3, verify_second_moment,
    QuadraticForm,
};
pub use limitpoints::{
    construct, find_prime_in_range, primorial_base, target_ratio, ExperimentConfig,
    LimitPointExperiment,
};
pub use scan::{Config, OutputFormat, ScanRecord, ScanSummary};
pub use vandermonde::{exact_v, log_v, report, s_of_n, s_star, VandermondeReport};

//! The `N = p * n` construction driving `S(N) / (tau(N)^2 log N)` toward
//! `(2 + 3 kappa) / (8 + 8 kappa)`.
//!
//! Starting from a smooth base `n`, pick the smallest prime `p` in
//! `[n^kappa, n^(kappa + epsilon)]` not dividing `n`. Half the divisors of
//! `N` are divisors of `n` (clustered near `sqrt(n)` when `n` is smooth) and
//! the other half are those times `p`, which pulls the weighted log-sum
//! between the two extremes of `[1/4, 3/8]`.

use num_bigint::BigUint;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::Serialize;

use crate::arith::{is_prime_u64, is_probable_prime, Factorization};
use crate::divisors::{DivisorList, DEFAULT_DIVISOR_CAP};
use crate::error::{Error, Result};
use crate::scan::{ser_display, ser_factorization};
use crate::vandermonde::s_of_n;

pub const DEFAULT_KAPPA_GRID: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
pub const DEFAULT_EPSILON: f64 = 0.1;

/// Tolerance on `measured_ratio` staying inside `[1/4, 3/8]`.
const RATIO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub divisor_cap: u64,
    /// Added to epsilon each time the search interval comes up empty.
    pub widen_step: f64,
    pub max_widenings: u32,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            divisor_cap: DEFAULT_DIVISOR_CAP,
            widen_step: 0.05,
            max_widenings: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitPointExperiment {
    #[serde(serialize_with = "ser_display")]
    pub base_n: BigUint,
    #[serde(serialize_with = "ser_factorization")]
    pub base_factorization: Factorization,
    pub kappa: f64,
    /// Epsilon as requested.
    pub epsilon: f64,
    /// Epsilon after widening; the search interval and the partition use this one.
    pub epsilon_used: f64,
    /// Set when `kappa <= 2 epsilon`.
    pub kappa_constraint_violated: bool,
    #[serde(serialize_with = "ser_display")]
    pub found_prime: BigUint,
    /// True when `found_prime` exceeds 64 bits and is only a probable prime.
    pub probable: bool,
    #[serde(serialize_with = "ser_display")]
    pub big_n: BigUint,
    pub tau_big_n: u64,
    pub s_big_n: f64,
    pub measured_ratio: f64,
    pub target: f64,
    pub deviation: f64,
    pub theta_max_base: f64,
    /// Divisors `d` of `n` with `|log d - log(n)/2| < epsilon log n`.
    pub d1: u64,
    /// `p * d` for `d` in `d1`.
    pub d2: u64,
    /// The remaining divisors of `N`.
    pub d3: u64,
    /// `log2 tau(N)`, to set against `required_log2_tau`.
    pub log2_tau_big_n: f64,
    /// `1 / (4 theta_max)` for the base.
    pub required_log2_tau: f64,
}

/// `(2 + 3 kappa) / (8 + 8 kappa)`.
pub fn target_ratio(kappa: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::OutOfRange {
            name: "kappa",
            value: kappa,
            expected: "positive and finite",
        });
    }
    Ok((2.0 + 3.0 * kappa) / (8.0 + 8.0 * kappa))
}

/// Smallest probable prime in `[lo, hi]` that is not a prime of `exclude`.
pub fn find_prime_in_range(lo: &BigUint, hi: &BigUint, exclude: &Factorization) -> Option<BigUint> {
    let excluded = |c: &BigUint| exclude.factors().iter().any(|pp| &pp.prime == c);
    if let (Some(lo), Some(hi)) = (lo.to_u64(), hi.to_u64()) {
        return (lo..=hi)
            .filter(|&c| is_prime_u64(c))
            .map(BigUint::from)
            .find(|c| !excluded(c));
    }
    let mut c = lo.clone();
    while &c <= hi {
        if is_probable_prime(&c) && !excluded(&c) {
            return Some(c);
        }
        c += 1u32;
    }
    None
}

/// Factorization of the product of the first `k` primes.
pub fn primorial_base(k: usize) -> Factorization {
    let primes = (2u64..).filter(|&c| is_prime_u64(c)).take(k);
    Factorization::from_prime_powers(primes.map(|p| (p, 1))).expect("primes ascend")
}

/// `floor(exp(x))` for `x >= 0` as a big integer.
fn floor_exp(x: f64) -> BigUint {
    if x < 700.0 {
        return BigUint::from_f64(x.exp().floor()).unwrap();
    }
    // exp(x) = exp(r) 2^k with exp(r) in [2^52, 2^53).
    let k = (x / std::f64::consts::LN_2).floor() as u64 - 52;
    let r = x - k as f64 * std::f64::consts::LN_2;
    BigUint::from(r.exp().floor() as u64) << k
}

/// Outward-rounded bounds on `n^e`: returns `(lower, upper)` with
/// `lower <= n^e <= upper`; exact when `e` is a whole number.
fn pow_bounds(n: &BigUint, ln_n: f64, e: f64) -> (BigUint, BigUint) {
    if e.fract() == 0.0 && e >= 0.0 && e < f64::from(u32::MAX) {
        let v = n.pow(e as u32);
        return (v.clone(), v);
    }
    let x = e * ln_n;
    let guard = 1e-12 * x.max(1.0);
    (floor_exp((x - guard).max(0.0)), floor_exp(x + guard) + 1u32)
}

/// Integer interval certainly inside `[n^lo_exp, n^hi_exp]`.
fn search_interval(n: &BigUint, ln_n: f64, lo_exp: f64, hi_exp: f64) -> (BigUint, BigUint) {
    let (lo_floor, lo_ceil) = pow_bounds(n, ln_n, lo_exp);
    let lo = if lo_floor == lo_ceil {
        lo_floor
    } else {
        lo_ceil
    };
    let (hi, _) = pow_bounds(n, ln_n, hi_exp);
    (lo.max(BigUint::from(2u32)), hi)
}

pub fn construct(
    base: &Factorization,
    kappa: f64,
    epsilon: f64,
    config: &ExperimentConfig,
) -> Result<LimitPointExperiment> {
    if base.is_one() {
        return Err(Error::UnitInput { op: "construct" });
    }
    let target = target_ratio(kappa)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::OutOfRange {
            name: "epsilon",
            value: epsilon,
            expected: "positive and finite",
        });
    }
    let tau_big = 2 * base.tau();
    if tau_big > config.divisor_cap {
        return Err(Error::CapExceeded {
            what: "divisor enumeration",
            tau: tau_big,
            cap: config.divisor_cap,
        });
    }

    let n = base.value();
    let ln_n = base.ln();
    let (lo, mut hi) = search_interval(n, ln_n, kappa, kappa + epsilon);
    let mut eps = epsilon;
    let mut from = lo.clone();
    let mut widenings = 0;
    let prime = loop {
        if from <= hi {
            if let Some(p) = find_prime_in_range(&from, &hi, base) {
                break p;
            }
            from = &hi + 1u32;
        }
        if widenings == config.max_widenings {
            return Err(Error::PrimeSearchExhausted {
                lo,
                hi,
                epsilon: eps,
            });
        }
        widenings += 1;
        eps = epsilon + f64::from(widenings) * config.widen_step;
        hi = search_interval(n, ln_n, kappa, kappa + eps).1;
    };

    let big = base.with_new_prime(&prime)?;
    let ds = DivisorList::with_cap(&big, config.divisor_cap)?;
    let tau_big_n = big.tau();
    let s = s_of_n(&ds);
    let measured = s / ((tau_big_n as f64).powi(2) * big.ln());
    if !(0.25 * (1.0 - RATIO_TOL)..=0.375 * (1.0 + RATIO_TOL)).contains(&measured) {
        return Err(Error::Invariant {
            n: big.value().clone(),
            message: format!("S(N)/(tau^2 log N) = {measured} outside [1/4, 3/8]"),
        });
    }

    let half = ln_n / 2.0;
    let d1 = DivisorList::with_cap(base, config.divisor_cap)?
        .logs()
        .into_iter()
        .filter(|l| (l - half).abs() < eps * ln_n)
        .count() as u64;
    let theta = base.theta_max()?;

    Ok(LimitPointExperiment {
        base_n: n.clone(),
        base_factorization: base.clone(),
        kappa,
        epsilon,
        epsilon_used: eps,
        kappa_constraint_violated: kappa <= 2.0 * epsilon,
        probable: prime.bits() > 64,
        found_prime: prime,
        big_n: big.value().clone(),
        tau_big_n,
        s_big_n: s,
        measured_ratio: measured,
        target,
        deviation: (measured - target).abs(),
        theta_max_base: theta,
        d1,
        d2: d1,
        d3: tau_big_n - 2 * d1,
        log2_tau_big_n: (tau_big_n as f64).log2(),
        required_log2_tau: 1.0 / (4.0 * theta),
    })
}

impl LimitPointExperiment {
    /// `n^kappa <= p <= n^(kappa + epsilon_used)`, checked in floating point
    /// with a relative slack of `tol`.
    pub fn prime_in_interval(&self, tol: f64) -> bool {
        let ln_p = crate::arith::big_ln(&self.found_prime);
        let ln_n = crate::arith::big_ln(&self.base_n);
        ln_p >= self.kappa * ln_n * (1.0 - tol)
            && ln_p <= (self.kappa + self.epsilon_used) * ln_n * (1.0 + tol)
    }
}

/// `primorial_base(k)` for `k` in `ks`, each paired with its experiment.
pub fn primorial_sweep(
    ks: impl IntoIterator<Item = usize>,
    kappa: f64,
    epsilon: f64,
    config: &ExperimentConfig,
) -> Result<Vec<LimitPointExperiment>> {
    ks.into_iter()
        .map(|k| construct(&primorial_base(k), kappa, epsilon, config))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::factor_u64;
    use num_traits::One;

    fn big(n: u64) -> BigUint {
        BigUint::from(n)
    }

    #[test]
    fn target_examples() {
        assert!((target_ratio(1e-12).unwrap() - 0.25).abs() < 1e-12);
        assert!((target_ratio(2.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((target_ratio(1e12).unwrap() - 0.375).abs() < 1e-12);
        assert!((target_ratio(1.0).unwrap() - 0.3125).abs() < 1e-15);
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(target_ratio(bad).is_err());
        }
    }

    #[test]
    fn prime_search_examples() {
        let six = factor_u64(6).unwrap();
        let one = factor_u64(1).unwrap();
        assert_eq!(find_prime_in_range(&big(10), &big(20), &six), Some(big(11)));
        assert_eq!(find_prime_in_range(&big(24), &big(28), &one), None);
        assert_eq!(find_prime_in_range(&big(2), &big(3), &one), Some(big(2)));
        assert_eq!(find_prime_in_range(&big(2), &big(3), &six), None);
        assert_eq!(find_prime_in_range(&big(5), &big(4), &one), None);
    }

    #[test]
    fn prime_search_beyond_u64() {
        let lo = BigUint::one() << 64u32;
        let hi = &lo + 1000u32;
        let p = find_prime_in_range(&lo, &hi, &factor_u64(1).unwrap()).unwrap();
        assert_eq!(p, &lo + 13u32); // 2^64 + 13 is the first prime past 2^64
    }

    #[test]
    fn primorial_examples() {
        assert_eq!(primorial_base(1), factor_u64(2).unwrap());
        assert_eq!(primorial_base(4), factor_u64(210).unwrap());
        let p7 = primorial_base(7);
        assert_eq!(p7.value(), &big(510_510));
        let theta = p7.theta_max().unwrap();
        assert!((theta - 17f64.ln() / 510_510f64.ln()).abs() < 1e-15);
        assert!((theta - 0.2156).abs() < 1e-4);
    }

    #[test]
    fn pow_bounds_are_outward() {
        let n = big(6);
        let ln = 6f64.ln();
        assert_eq!(pow_bounds(&n, ln, 1.0), (big(6), big(6)));
        let (lo, hi) = pow_bounds(&n, ln, 1.3); // 6^1.3 = 10.27...
        assert_eq!((lo, hi), (big(10), big(11)));
        assert_eq!(search_interval(&n, ln, 1.0, 1.3), (big(6), big(10)));
        // exp beyond f64 range
        let x = 1000.0 * std::f64::consts::LN_2;
        let v = floor_exp(x);
        let expected = BigUint::one() << 1000u32;
        let rel = (crate::arith::big_ln(&v) - crate::arith::big_ln(&expected)).abs();
        assert!(rel < 1e-12);
    }

    #[test]
    fn construct_base_six() {
        let e = construct(
            &factor_u64(6).unwrap(),
            1.0,
            0.3,
            &ExperimentConfig::default(),
        )
        .unwrap();
        assert_eq!(e.found_prime, big(7));
        assert_eq!(e.big_n, big(42));
        assert_eq!(e.tau_big_n, 8);
        assert!((e.target - 0.3125).abs() < 1e-15);
        // divisors of 42: 1,2,3,6,7,14,21,42
        let ds = [1f64, 2., 3., 6., 7., 14., 21., 42.];
        let s: f64 = ds.iter().enumerate().map(|(i, d)| i as f64 * d.ln()).sum();
        assert!((e.s_big_n - s).abs() < 1e-12);
        assert!((s - 73.675399364202).abs() < 1e-9);
        assert!((e.measured_ratio - s / (64.0 * 42f64.ln())).abs() < 1e-14);
        assert!((e.measured_ratio - 0.3080).abs() < 1e-3);
        assert!(!e.kappa_constraint_violated);
        assert!(e.prime_in_interval(1e-12));
        assert_eq!(e.d1 + e.d2 + e.d3, 8);
    }

    #[test]
    fn construct_base_two_needs_wide_epsilon() {
        let cfg = ExperimentConfig::default();
        let two = factor_u64(2).unwrap();
        let e = construct(&two, 1.0, 0.6, &cfg).unwrap();
        assert_eq!((e.found_prime.clone(), e.big_n.clone()), (big(3), big(6)));
        let s6 = 2f64.ln() + 2.0 * 3f64.ln() + 3.0 * 6f64.ln();
        assert!((e.measured_ratio - s6 / (16.0 * 6f64.ln())).abs() < 1e-14);
        assert!((e.measured_ratio - 0.2883).abs() < 1e-4);

        // Starting from a small epsilon, widening reaches the same prime.
        let w = construct(&two, 1.0, 0.1, &cfg).unwrap();
        assert_eq!(w.found_prime, big(3));
        assert!(w.epsilon_used > 0.58 && w.epsilon_used < 0.61);
    }

    #[test]
    fn construct_flags_small_kappa() {
        let e = construct(
            &factor_u64(6).unwrap(),
            0.1,
            0.3,
            &ExperimentConfig::default(),
        );
        // 6^0.1 .. 6^0.4 = [1.2, 2.05]: only 2, which divides 6; widening finds 3 or 5.
        let e = e.unwrap();
        assert!(e.kappa_constraint_violated);
    }

    #[test]
    fn construct_exhausts() {
        let cfg = ExperimentConfig {
            max_widenings: 0,
            ..ExperimentConfig::default()
        };
        let err = construct(&factor_u64(2).unwrap(), 1.0, 0.1, &cfg).unwrap_err();
        assert!(matches!(err, Error::PrimeSearchExhausted { .. }), "{err}");
    }

    #[test]
    fn construct_rejects_bad_input() {
        let cfg = ExperimentConfig::default();
        let six = factor_u64(6).unwrap();
        assert!(construct(&factor_u64(1).unwrap(), 1.0, 0.1, &cfg).is_err());
        assert!(construct(&six, 0.0, 0.1, &cfg).is_err());
        assert!(construct(&six, 1.0, 0.0, &cfg).is_err());
        let tight = ExperimentConfig {
            divisor_cap: 4,
            ..cfg
        };
        assert!(matches!(
            construct(&six, 1.0, 0.3, &tight),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn construct_large_kappa_goes_past_u64() {
        let e = construct(&primorial_base(9), 4.0, 0.1, &ExperimentConfig::default()).unwrap();
        assert!(e.probable);
        assert!(e.prime_in_interval(1e-12));
        assert!((0.25..=0.375).contains(&e.measured_ratio));
        assert_eq!(e.tau_big_n, 1024);
    }
}

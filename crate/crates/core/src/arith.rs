//! Factorization, primality and the multiplicative bookkeeping (tau, Omega_2, theta).

use std::fmt;
use std::sync::OnceLock;

use num_bigint::BigUint;
use num_integer::{Integer, Roots};
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Primes below this bound are removed by trial division before Pollard-Brent runs.
const TRIAL_BOUND: u64 = 1 << 10;

/// Bases for the deterministic Miller-Rabin test on 64-bit inputs (exact below 3.3e24).
const U64_WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Fixed witness schedule for inputs above 64 bits: the first 20 primes.
pub const BIG_WITNESSES: [u32; 20] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71,
];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PrimePower {
    pub prime: BigUint,
    pub exponent: u32,
}

impl PrimePower {
    /// `p^alpha` as an integer.
    pub fn value(&self) -> BigUint {
        self.prime.pow(self.exponent)
    }

    /// `log(p^alpha)`.
    pub fn ln(&self) -> f64 {
        f64::from(self.exponent) * big_ln(&self.prime)
    }
}

/// Canonical prime-power decomposition of a positive integer.
///
/// Primes are strictly increasing, exponents are at least one, and the
/// product of the parts equals `value`. The empty list represents 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Factorization {
    value: BigUint,
    factors: Vec<PrimePower>,
}

impl Factorization {
    pub fn one() -> Self {
        Self {
            value: BigUint::one(),
            factors: Vec::new(),
        }
    }

    /// Builds a factorization from explicit `(prime, exponent)` parts.
    ///
    /// Parts must have strictly increasing primes that pass
    /// [`is_probable_prime`] and exponents of at least one.
    pub fn from_prime_powers<I, P>(parts: I) -> Result<Self>
    where
        I: IntoIterator<Item = (P, u32)>,
        P: Into<BigUint>,
    {
        let mut factors: Vec<PrimePower> = Vec::new();
        let mut value = BigUint::one();
        for (p, e) in parts {
            let prime: BigUint = p.into();
            if e == 0 {
                return Err(Error::InvalidFactorization(format!(
                    "exponent 0 for prime {prime}"
                )));
            }
            if !is_probable_prime(&prime) {
                return Err(Error::InvalidFactorization(format!("{prime} is not prime")));
            }
            if let Some(last) = factors.last() {
                if last.prime >= prime {
                    return Err(Error::InvalidFactorization(
                        "primes must be strictly increasing".into(),
                    ));
                }
            }
            value *= prime.pow(e);
            factors.push(PrimePower { prime, exponent: e });
        }
        Ok(Self { value, factors })
    }

    /// Factorization of `p * n` for a prime `p` not dividing `n`.
    pub fn with_new_prime(&self, p: &BigUint) -> Result<Self> {
        if self.factors.iter().any(|f| &f.prime == p) {
            return Err(Error::InvalidFactorization(format!(
                "{p} already divides {}",
                self.value
            )));
        }
        let mut factors = self.factors.clone();
        let at = factors.partition_point(|f| &f.prime < p);
        factors.insert(
            at,
            PrimePower {
                prime: p.clone(),
                exponent: 1,
            },
        );
        Ok(Self {
            value: &self.value * p,
            factors,
        })
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn factors(&self) -> &[PrimePower] {
        &self.factors
    }

    pub fn is_one(&self) -> bool {
        self.factors.is_empty()
    }

    /// `prod (alpha + 1)`.
    pub fn tau(&self) -> u64 {
        self.factors.iter().fold(1u64, |acc, f| {
            acc.checked_mul(u64::from(f.exponent) + 1)
                .expect("tau(n) overflows u64")
        })
    }

    /// `sum alpha^2`.
    pub fn omega2(&self) -> u64 {
        self.factors
            .iter()
            .map(|f| u64::from(f.exponent).pow(2))
            .sum()
    }

    /// Largest share `log(p^alpha) / log(n)` of a prime-power part.
    pub fn theta_max(&self) -> Result<f64> {
        match self.factors.len() {
            0 => Err(Error::UnitInput { op: "theta_max" }),
            1 => Ok(1.0),
            _ => {
                let ln_n = self.ln();
                Ok(self
                    .factors
                    .iter()
                    .map(|f| f.ln() / ln_n)
                    .fold(0.0, f64::max))
            }
        }
    }

    /// True when every exponent is even.
    pub fn is_square(&self) -> bool {
        self.factors.iter().all(|f| f.exponent % 2 == 0)
    }

    /// `log n`, accumulated from the parts.
    pub fn ln(&self) -> f64 {
        big_ln(&self.value)
    }
}

impl fmt::Display for Factorization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "1");
        }
        for (i, pp) in self.factors.iter().enumerate() {
            if i > 0 {
                write!(f, " * ")?;
            }
            if pp.exponent == 1 {
                write!(f, "{}", pp.prime)?;
            } else {
                write!(f, "{}^{}", pp.prime, pp.exponent)?;
            }
        }
        Ok(())
    }
}

pub fn tau(f: &Factorization) -> u64 {
    f.tau()
}

pub fn omega2(f: &Factorization) -> u64 {
    f.omega2()
}

pub fn theta_max(f: &Factorization) -> Result<f64> {
    f.theta_max()
}

/// Natural logarithm of an arbitrary-precision integer.
///
/// Uses the top 64 bits as mantissa and the remaining bit length as a power
/// of two. Returns `-inf` for zero.
pub fn big_ln(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits <= 64 {
        return (n.to_u64().unwrap() as f64).ln();
    }
    let shift = bits - 64;
    let mantissa = (n >> shift).to_u64().unwrap();
    (mantissa as f64).ln() + shift as f64 * std::f64::consts::LN_2
}

fn small_primes() -> &'static [u64] {
    static PRIMES: OnceLock<Vec<u64>> = OnceLock::new();
    PRIMES.get_or_init(|| sieve(TRIAL_BOUND))
}

/// Primes `<= limit` by the sieve of Eratosthenes.
pub fn sieve(limit: u64) -> Vec<u64> {
    let limit = limit as usize;
    if limit < 2 {
        return Vec::new();
    }
    let mut composite = vec![false; limit + 1];
    let mut primes = Vec::new();
    for i in 2..=limit {
        if composite[i] {
            continue;
        }
        primes.push(i as u64);
        let mut j = i * i;
        while j <= limit {
            composite[j] = true;
            j += i;
        }
    }
    primes
}

#[inline]
fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic primality for 64-bit inputs.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for &p in &U64_WITNESSES {
        if n == p {
            return true;
        }
        if n.is_multiple_of(p) {
            return false;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &U64_WITNESSES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Primality test: exact below 2^64, otherwise a strong probable-prime test
/// against the bases in [`BIG_WITNESSES`].
pub fn is_probable_prime(n: &BigUint) -> bool {
    if let Some(small) = n.to_u64() {
        return is_prime_u64(small);
    }
    for &p in &BIG_WITNESSES {
        if (n % p).is_zero() {
            return false;
        }
    }
    let one = BigUint::one();
    let n_minus_one = n - &one;
    let s = n_minus_one.trailing_zeros().unwrap();
    let d = &n_minus_one >> s;
    'witness: for &a in &BIG_WITNESSES {
        let mut x = BigUint::from(a).modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// One nontrivial factor of an odd composite `n` (Brent's variant of Pollard rho).
fn pollard_brent(n: u64) -> u64 {
    const BATCH: u64 = 128;
    for c in 1..n {
        let f = |x: u64| (mul_mod(x, x, n) + c) % n;
        let (mut y, mut r, mut q, mut g) = (2u64, 1u64, 1u64, 1u64);
        let mut x = y;
        let mut ys = y;
        while g == 1 {
            x = y;
            for _ in 0..r {
                y = f(y);
            }
            let mut k = 0;
            while k < r && g == 1 {
                ys = y;
                for _ in 0..BATCH.min(r - k) {
                    y = f(y);
                    q = mul_mod(q, x.abs_diff(y), n);
                }
                g = q.gcd(&n);
                k += BATCH;
            }
            r *= 2;
        }
        if g == n {
            loop {
                ys = f(ys);
                g = x.abs_diff(ys).gcd(&n);
                if g > 1 {
                    break;
                }
            }
        }
        if g != n {
            return g;
        }
    }
    unreachable!("pollard_brent called on a prime")
}

fn split_u64(n: u64, out: &mut Vec<u64>) {
    if n == 1 {
        return;
    }
    if is_prime_u64(n) {
        out.push(n);
        return;
    }
    let r = n.sqrt();
    if r * r == n {
        split_u64(r, out);
        split_u64(r, out);
        return;
    }
    let d = pollard_brent(n);
    split_u64(d, out);
    split_u64(n / d, out);
}

fn collect_primes(mut primes: Vec<u64>) -> Vec<(u64, u32)> {
    primes.sort_unstable();
    let mut parts: Vec<(u64, u32)> = Vec::new();
    for p in primes {
        match parts.last_mut() {
            Some((q, e)) if *q == p => *e += 1,
            _ => parts.push((p, 1)),
        }
    }
    parts
}

fn from_u64_parts(n: u64, parts: Vec<(u64, u32)>) -> Factorization {
    Factorization {
        value: BigUint::from(n),
        factors: parts
            .into_iter()
            .map(|(p, e)| PrimePower {
                prime: BigUint::from(p),
                exponent: e,
            })
            .collect(),
    }
}

/// Canonical factorization of a 64-bit integer.
pub fn factor_u64(n: u64) -> Result<Factorization> {
    if n == 0 {
        return Err(Error::Zero);
    }
    let mut rest = n;
    let mut primes = Vec::new();
    for &p in small_primes() {
        if p * p > rest {
            break;
        }
        while rest.is_multiple_of(p) {
            rest /= p;
            primes.push(p);
        }
    }
    split_u64(rest, &mut primes);
    Ok(from_u64_parts(n, collect_primes(primes)))
}

/// Canonical factorization of `n`.
///
/// After trial division, the cofactor must either fit in 64 bits or be a
/// probable prime; anything else is refused.
pub fn factor(n: &BigUint) -> Result<Factorization> {
    if n.is_zero() {
        return Err(Error::Zero);
    }
    if let Some(small) = n.to_u64() {
        return factor_u64(small);
    }
    let mut rest = n.clone();
    let mut primes = Vec::new();
    for &p in small_primes() {
        while (&rest % p).is_zero() {
            rest /= p;
            primes.push(p);
        }
    }
    let mut big_prime = None;
    match rest.to_u64() {
        Some(r) => split_u64(r, &mut primes),
        None if is_probable_prime(&rest) => big_prime = Some(rest),
        None => return Err(Error::FactorizationUnsupported(rest)),
    }
    let mut f = from_u64_parts(1, collect_primes(primes));
    f.value = f.factors.iter().map(PrimePower::value).product();
    if let Some(p) = big_prime {
        f = f.with_new_prime(&p)?;
    }
    debug_assert_eq!(&f.value, n);
    Ok(f)
}

/// Read-only prime table for bulk factorization of a range of 64-bit integers.
#[derive(Debug, Clone)]
pub struct PrimeTable {
    primes: Vec<u64>,
    limit: u64,
}

impl PrimeTable {
    /// Table sufficient to factor every `n <= max_n` by trial division alone.
    pub fn for_range(max_n: u64) -> Self {
        let limit = max_n.sqrt() + 1;
        Self {
            primes: sieve(limit),
            limit,
        }
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    /// Prime-exponent pairs of `n`, ascending.
    pub fn factor_parts(&self, n: u64) -> Vec<(u64, u32)> {
        let mut rest = n;
        let mut parts = Vec::new();
        for &p in &self.primes {
            if p * p > rest {
                break;
            }
            if rest.is_multiple_of(p) {
                let mut e = 0;
                while rest.is_multiple_of(p) {
                    rest /= p;
                    e += 1;
                }
                parts.push((p, e));
            }
        }
        if rest > 1 {
            if rest / self.limit >= self.limit {
                // Outside the table's range; finish with the general method.
                let mut tail = Vec::new();
                split_u64(rest, &mut tail);
                parts.extend(collect_primes(tail));
            } else {
                parts.push((rest, 1));
            }
        }
        parts
    }

    pub fn factor(&self, n: u64) -> Result<Factorization> {
        if n == 0 {
            return Err(Error::Zero);
        }
        Ok(from_u64_parts(n, self.factor_parts(n)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parts(f: &Factorization) -> Vec<(u64, u32)> {
        f.factors()
            .iter()
            .map(|p| (p.prime.to_u64().unwrap(), p.exponent))
            .collect()
    }

    fn trial_division(mut n: u64) -> Vec<(u64, u32)> {
        let mut out = Vec::new();
        let mut p = 2;
        while p * p <= n {
            let mut e = 0;
            while n.is_multiple_of(p) {
                n /= p;
                e += 1;
            }
            if e > 0 {
                out.push((p, e));
            }
            p += 1;
        }
        if n > 1 {
            out.push((n, 1));
        }
        out
    }

    #[test]
    fn factor_examples() {
        assert!(parts(&factor_u64(1).unwrap()).is_empty());
        assert_eq!(parts(&factor_u64(12).unwrap()), vec![(2, 2), (3, 1)]);
        assert_eq!(parts(&factor_u64(360).unwrap()), trial_division(360));
        assert_eq!(
            parts(&factor_u64(360).unwrap()),
            vec![(2, 3), (3, 2), (5, 1)]
        );
    }

    #[test]
    fn zero_is_rejected() {
        assert!(matches!(factor_u64(0), Err(Error::Zero)));
        assert!(matches!(factor(&BigUint::zero()), Err(Error::Zero)));
    }

    #[test]
    fn tau_omega2_theta_examples() {
        let one = factor_u64(1).unwrap();
        let twelve = factor_u64(12).unwrap();
        let f360 = factor_u64(360).unwrap();
        assert_eq!(one.tau(), 1);
        assert_eq!(twelve.tau(), 6);
        let brute = (1..=360u64).filter(|d| 360 % d == 0).count() as u64;
        assert_eq!(f360.tau(), brute);
        assert_eq!(f360.tau(), 24);

        assert_eq!(one.omega2(), 0);
        assert_eq!(twelve.omega2(), 5);
        assert_eq!(f360.omega2(), 14);

        assert!(matches!(one.theta_max(), Err(Error::UnitInput { .. })));
        assert_eq!(factor_u64(97).unwrap().theta_max().unwrap(), 1.0);
        let t12 = (4f64).ln() / (12f64).ln();
        assert!((twelve.theta_max().unwrap() - t12).abs() < 1e-15);
        assert!((t12 - 0.5579).abs() < 1e-4);
        let t30 = (5f64).ln() / (30f64).ln();
        assert!((factor_u64(30).unwrap().theta_max().unwrap() - t30).abs() < 1e-15);
        assert!((t30 - 0.4732).abs() < 1e-4);
    }

    #[test]
    fn primality_examples() {
        assert!(!is_prime_u64(0));
        assert!(!is_prime_u64(1));
        assert!(is_prime_u64(97));
        assert!(!is_prime_u64(561));
        assert!(is_prime_u64(u64::MAX - 58)); // 2^64 - 59
        assert!(!is_prime_u64(3_215_031_751)); // strong pseudoprime to 2, 3, 5, 7
    }

    #[test]
    fn big_primality() {
        // 2^89 - 1 and 2^127 - 1 are Mersenne primes.
        let m89 = (BigUint::one() << 89u32) - 1u32;
        let m127 = (BigUint::one() << 127u32) - 1u32;
        assert!(is_probable_prime(&m89));
        assert!(is_probable_prime(&m127));
        assert!(!is_probable_prime(&(&m89 * &m127)));
        assert!(!is_probable_prime(&((BigUint::one() << 100u32) + 1u32)));
    }

    #[test]
    fn factor_beyond_u64_with_prime_cofactor() {
        let m89 = (BigUint::one() << 89u32) - 1u32;
        let n = &m89 * 360u32;
        let f = factor(&n).unwrap();
        assert_eq!(f.value(), &n);
        assert_eq!(f.factors().len(), 4);
        assert_eq!(f.factors()[3].prime, m89);
        let m61 = (BigUint::one() << 61u32) - 1u32;
        assert!(matches!(
            factor(&(&m61 * &m89 * &m89)),
            Err(Error::FactorizationUnsupported(_))
        ));
    }

    #[test]
    fn pollard_splits_semiprimes() {
        let p = 4_294_967_291u64; // largest prime below 2^32
        let q = 4_294_967_279u64;
        assert_eq!(parts(&factor_u64(p * q).unwrap()), vec![(q, 1), (p, 1)]);
        assert_eq!(parts(&factor_u64(p * p).unwrap()), vec![(p, 2)]);
    }

    #[test]
    fn with_new_prime_keeps_order() {
        let f = factor_u64(2 * 9 * 11).unwrap();
        let g = f.with_new_prime(&BigUint::from(7u32)).unwrap();
        assert_eq!(parts(&g), vec![(2, 1), (3, 2), (7, 1), (11, 1)]);
        assert_eq!(g.tau(), 2 * f.tau());
        assert!(f.with_new_prime(&BigUint::from(3u32)).is_err());
    }

    #[test]
    fn from_prime_powers_validates() {
        assert!(Factorization::from_prime_powers([(2u32, 1), (2u32, 1)]).is_err());
        assert!(Factorization::from_prime_powers([(4u32, 1)]).is_err());
        assert!(Factorization::from_prime_powers([(3u32, 0)]).is_err());
        let f = Factorization::from_prime_powers([(2u32, 3), (5u32, 1)]).unwrap();
        assert_eq!(f.value(), &BigUint::from(40u32));
    }

    #[test]
    fn prime_table_matches_general_factor() {
        let table = PrimeTable::for_range(100_000);
        for n in 1..=100_000u64 {
            assert_eq!(table.factor(n).unwrap(), factor_u64(n).unwrap(), "n = {n}");
        }
        // Past the table range the general path takes over.
        let big = 1_000_003u64 * 1_000_033;
        assert_eq!(table.factor(big).unwrap(), factor_u64(big).unwrap());
    }

    #[test]
    fn big_ln_matches_f64() {
        for n in [1u64, 2, 12, 1 << 40, u64::MAX] {
            assert!((big_ln(&BigUint::from(n)) - (n as f64).ln()).abs() < 1e-12);
        }
        let big = BigUint::one() << 1000u32;
        let expected = 1000.0 * std::f64::consts::LN_2;
        assert!((big_ln(&big) - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn display() {
        assert_eq!(factor_u64(360).unwrap().to_string(), "2^3 * 3^2 * 5");
        assert_eq!(factor_u64(1).unwrap().to_string(), "1");
    }
}

//! Sorted divisor enumeration and divisor-concentration statistics.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

use crate::arith::{big_ln, Factorization};
use crate::error::{Error, Result};

/// Default ceiling on `tau(n)` for divisor enumeration.
pub const DEFAULT_DIVISOR_CAP: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Repr {
    Small(Vec<u64>),
    Big(Vec<BigUint>),
}

/// The divisors `1 = d_1 < d_2 < ... < d_tau = n` of a positive integer.
///
/// Values that fit in 64 bits are stored natively; larger `n` use
/// arbitrary-precision storage. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DivisorList {
    factorization: Factorization,
    repr: Repr,
}

impl DivisorList {
    pub fn new(f: &Factorization) -> Result<Self> {
        Self::with_cap(f, DEFAULT_DIVISOR_CAP)
    }

    pub fn with_cap(f: &Factorization, cap: u64) -> Result<Self> {
        let tau = f.tau();
        if tau > cap {
            return Err(Error::CapExceeded {
                what: "divisor enumeration",
                tau,
                cap,
            });
        }
        let repr = match f.value().to_u64() {
            Some(_) => {
                let mut ds = vec![1u64];
                ds.reserve(tau as usize - 1);
                for pp in f.factors() {
                    let p = pp.prime.to_u64().unwrap();
                    let len = ds.len();
                    let mut pk = 1u64;
                    for _ in 0..pp.exponent {
                        pk *= p;
                        for i in 0..len {
                            ds.push(ds[i] * pk);
                        }
                    }
                }
                ds.sort_unstable();
                Repr::Small(ds)
            }
            None => {
                let mut ds = vec![BigUint::one()];
                for pp in f.factors() {
                    let len = ds.len();
                    let mut pk = BigUint::one();
                    for _ in 0..pp.exponent {
                        pk *= &pp.prime;
                        for i in 0..len {
                            let d = &ds[i] * &pk;
                            ds.push(d);
                        }
                    }
                }
                ds.sort_unstable();
                Repr::Big(ds)
            }
        };
        Ok(Self {
            factorization: f.clone(),
            repr,
        })
    }

    pub fn factorization(&self) -> &Factorization {
        &self.factorization
    }

    pub fn n(&self) -> &BigUint {
        self.factorization.value()
    }

    pub fn len(&self) -> usize {
        match &self.repr {
            Repr::Small(v) => v.len(),
            Repr::Big(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Native view when `n` fits in 64 bits.
    pub fn as_u64(&self) -> Option<&[u64]> {
        match &self.repr {
            Repr::Small(v) => Some(v),
            Repr::Big(_) => None,
        }
    }

    /// Arbitrary-precision view when `n` exceeds 64 bits.
    pub fn as_big(&self) -> Option<&[BigUint]> {
        match &self.repr {
            Repr::Small(_) => None,
            Repr::Big(v) => Some(v),
        }
    }

    pub fn get(&self, i: usize) -> BigUint {
        match &self.repr {
            Repr::Small(v) => BigUint::from(v[i]),
            Repr::Big(v) => v[i].clone(),
        }
    }

    pub fn to_big_vec(&self) -> Vec<BigUint> {
        match &self.repr {
            Repr::Small(v) => v.iter().map(|&d| BigUint::from(d)).collect(),
            Repr::Big(v) => v.clone(),
        }
    }

    /// `log d_i` for every divisor, ascending.
    pub fn logs(&self) -> Vec<f64> {
        match &self.repr {
            Repr::Small(v) => v.iter().map(|&d| (d as f64).ln()).collect(),
            Repr::Big(v) => v.iter().map(big_ln).collect(),
        }
    }
}

pub fn divisors(f: &Factorization) -> Result<DivisorList> {
    DivisorList::new(f)
}

/// Most divisors in any closed interval `[X, 2X]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    pub max_count: u64,
    /// Smallest `X` attaining `max_count`; always a divisor.
    pub witness_x: BigUint,
    /// `max_count * sqrt(Omega_2(n)) / tau(n)`; absent for `n = 1`.
    pub normalized: Option<f64>,
}

/// Exact maximum over real `X > 0` of `|{d | n : X <= d <= 2X}|`.
///
/// An optimal window can always be slid right until its left end lands on a
/// divisor, so a two-pointer sweep over left ends `X = d_i` suffices.
pub fn dyadic_concentration(ds: &DivisorList) -> ConcentrationReport {
    let (max_count, at) = match &ds.repr {
        Repr::Small(v) => sweep(v.len(), |i, j| v[j] <= v[i].saturating_mul(2)),
        Repr::Big(v) => sweep(v.len(), |i, j| v[j] <= &v[i] << 1u32),
    };
    let f = ds.factorization();
    let normalized = if f.is_one() {
        None
    } else {
        Some(max_count as f64 * (f.omega2() as f64).sqrt() / f.tau() as f64)
    };
    ConcentrationReport {
        max_count,
        witness_x: ds.get(at),
        normalized,
    }
}

/// `within(i, j)`: is `d_j <= 2 d_i`? Returns (best count, smallest best left index).
fn sweep(len: usize, within: impl Fn(usize, usize) -> bool) -> (u64, usize) {
    let mut best = (0u64, 0usize);
    let mut j = 0;
    for i in 0..len {
        if j < i {
            j = i;
        }
        while j + 1 < len && within(i, j + 1) {
            j += 1;
        }
        let count = (j - i + 1) as u64;
        if count > best.0 {
            best = (count, i);
        }
    }
    best
}

/// Number of divisors with `|log d - (log n)/2| >= delta * log n`.
///
/// The float decision is trusted away from the boundary; near it the
/// comparison is redone exactly as `d^(2b)` against `n^(b +- 2a)` when
/// `delta` is (to double precision) a rational `a/b` with a small
/// denominator.
pub fn j_delta(ds: &DivisorList, delta: f64) -> Result<u64> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::OutOfRange {
            name: "delta",
            value: delta,
            expected: "(0, 1/2]",
        });
    }
    let f = ds.factorization();
    if f.is_one() {
        return Err(Error::UnitInput { op: "j_delta" });
    }
    let ln_n = f.ln();
    let threshold = delta * ln_n;
    let guard = 1e-9 * ln_n.max(1.0);
    let rational = small_rational(delta);
    let n = ds.n();
    let mut count = 0;
    for (i, ln_d) in ds.logs().into_iter().enumerate() {
        let margin = (ln_d - ln_n / 2.0).abs() - threshold;
        let far = if margin.abs() > guard {
            margin > 0.0
        } else {
            match rational {
                Some((a, b)) => far_exact(&ds.get(i), n, a, b),
                None => margin >= 0.0,
            }
        };
        if far {
            count += 1;
        }
    }
    Ok(count)
}

/// Exact form of `j_delta` for `delta = a / b`.
pub fn j_delta_rational(ds: &DivisorList, a: u32, b: u32) -> Result<u64> {
    if a == 0 || b == 0 || 2 * a > b {
        return Err(Error::OutOfRange {
            name: "delta",
            value: f64::from(a) / f64::from(b),
            expected: "(0, 1/2]",
        });
    }
    if ds.factorization().is_one() {
        return Err(Error::UnitInput { op: "j_delta" });
    }
    let n = ds.n();
    Ok((0..ds.len())
        .filter(|&i| far_exact(&ds.get(i), n, a, b))
        .count() as u64)
}

/// `|log d - log n / 2| >= (a/b) log n` via `d^(2b) >= n^(b+2a)` or `d^(2b) <= n^(b-2a)`.
fn far_exact(d: &BigUint, n: &BigUint, a: u32, b: u32) -> bool {
    let lhs = d.pow(2 * b);
    lhs >= n.pow(b + 2 * a) || lhs <= n.pow(b - 2 * a)
}

/// `(a, b)` with `b <= 1000` and `a / b == x` to double precision, if any.
fn small_rational(x: f64) -> Option<(u32, u32)> {
    (1..=1000u32).find_map(|b| {
        let a = (x * f64::from(b)).round();
        (a >= 1.0 && f64::from(a as u32) / f64::from(b) == x).then_some((a as u32, b))
    })
}

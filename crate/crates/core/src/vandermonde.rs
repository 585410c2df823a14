//! `V(n)`, `S(n)`, `S*(n)` and the bound ratios built from them.

use num_bigint::BigUint;
use num_traits::One;
use serde::Serialize;

use crate::arith::{big_ln, factor};
use crate::divisors::DivisorList;
use crate::error::{Error, Result};
use crate::sum::CompensatedSum;

/// Default ceiling on `tau(n)` for exact evaluation of `V(n)`.
pub const DEFAULT_EXACT_CAP: u64 = 1024;

/// Relative tolerance between `log_v` and the log of the exact product.
pub const EXACT_LOG_TOL: f64 = 1e-9;

/// Balanced product; keeps operand sizes even so the big multiplications stay subquadratic.
pub(crate) fn product_tree(mut layer: Vec<BigUint>) -> BigUint {
    if layer.is_empty() {
        return BigUint::one();
    }
    while layer.len() > 1 {
        let mut next = Vec::with_capacity(layer.len().div_ceil(2));
        let mut it = layer.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a * b,
                None => a,
            });
        }
        layer = next;
    }
    layer.pop().unwrap()
}

/// Packs 64-bit factors into as few word-sized leaves as possible.
fn pack_u64(factors: impl Iterator<Item = u64>) -> Vec<BigUint> {
    let mut leaves = Vec::new();
    let mut acc = 1u64;
    for x in factors {
        match acc.checked_mul(x) {
            Some(p) => acc = p,
            None => {
                leaves.push(BigUint::from(acc));
                acc = x;
            }
        }
    }
    leaves.push(BigUint::from(acc));
    leaves
}

/// Exact `V(n) = prod_{i<j} (d_j - d_i)`, refused when `tau(n) > cap`.
pub fn exact_v(ds: &DivisorList, cap: u64) -> Result<BigUint> {
    let tau = ds.len() as u64;
    if tau > cap {
        return Err(Error::CapExceeded {
            what: "exact V(n)",
            tau,
            cap,
        });
    }
    let leaves = match (ds.as_u64(), ds.as_big()) {
        (Some(d), _) => {
            pack_u64((1..d.len()).flat_map(|j| d[..j].iter().map(move |&di| d[j] - di)))
        }
        (_, Some(d)) => (1..d.len())
            .flat_map(|j| d[..j].iter().map(move |di| &d[j] - di))
            .collect(),
        _ => unreachable!(),
    };
    Ok(product_tree(leaves))
}

/// `log V(n)`, summed j-major then i-minor with compensation.
pub fn log_v(ds: &DivisorList) -> f64 {
    let mut acc = CompensatedSum::new();
    if let Some(d) = ds.as_u64() {
        for j in 1..d.len() {
            let dj = d[j];
            for &di in &d[..j] {
                acc += ((dj - di) as f64).ln();
            }
        }
    } else if let Some(d) = ds.as_big() {
        for j in 1..d.len() {
            for di in &d[..j] {
                acc += big_ln(&(&d[j] - di));
            }
        }
    }
    acc.value()
}

/// `S(n) = sum_i (i - 1) log d_i`.
pub fn s_of_n(ds: &DivisorList) -> f64 {
    weighted(&ds.logs(), |i, _| i as f64)
}

/// `S*(n) = sum_i (tau - i) log d_i`.
pub fn s_star(ds: &DivisorList) -> f64 {
    weighted(&ds.logs(), |i, t| (t - 1 - i) as f64)
}

/// Both weighted sums from precomputed logs: `(S, S*)`.
pub fn s_pair(logs: &[f64]) -> (f64, f64) {
    (
        weighted(logs, |i, _| i as f64),
        weighted(logs, |i, t| (t - 1 - i) as f64),
    )
}

fn weighted(logs: &[f64], weight: impl Fn(usize, usize) -> f64) -> f64 {
    let t = logs.len();
    logs.iter()
        .enumerate()
        .map(|(i, &l)| weight(i, t) * l)
        .collect::<CompensatedSum>()
        .value()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VandermondeReport {
    #[serde(serialize_with = "crate::scan::ser_display")]
    pub n: BigUint,
    pub tau: u64,
    pub omega2: u64,
    pub is_square: bool,
    pub log_v: f64,
    pub s: f64,
    pub s_star: f64,
    /// `S(n) - log V(n)`, nonnegative.
    pub residual: f64,
    /// `residual / (tau^2 log n / sqrt(Omega_2) + tau^2)`; `n >= 2` only.
    pub normalized_residual: Option<f64>,
    /// `log V(n) / (tau^2/4 log n)`.
    pub lower_ratio: Option<f64>,
    /// `log V(n) / (3 tau^2/8 log n)`.
    pub upper_ratio: Option<f64>,
    /// `S(n) / (tau^2 log n)`.
    pub s_ratio: Option<f64>,
    #[serde(serialize_with = "crate::scan::ser_opt_display")]
    pub exact_v: Option<BigUint>,
}

impl VandermondeReport {
    /// Assembles the report from an already enumerated divisor list.
    ///
    /// With `want_exact`, `V(n)` is computed when `tau(n) <= exact_cap` and
    /// left absent otherwise.
    pub fn from_divisors(ds: &DivisorList, want_exact: bool, exact_cap: u64) -> Result<Self> {
        let f = ds.factorization();
        let tau = f.tau();
        let omega2 = f.omega2();
        let lv = log_v(ds);
        let (s, s_star) = s_pair(&ds.logs());
        let residual = s - lv;

        let (normalized_residual, lower_ratio, upper_ratio, s_ratio) = if f.is_one() {
            (None, None, None, None)
        } else {
            let t2 = (tau as f64).powi(2);
            let ln_n = f.ln();
            let scale = t2 * ln_n / (omega2 as f64).sqrt() + t2;
            (
                Some(residual / scale),
                Some(lv / (t2 / 4.0 * ln_n)),
                Some(lv / (3.0 * t2 / 8.0 * ln_n)),
                Some(s / (t2 * ln_n)),
            )
        };

        let exact = if want_exact {
            match exact_v(ds, exact_cap) {
                Ok(v) => {
                    let ln_exact = big_ln(&v);
                    if (lv - ln_exact).abs() > EXACT_LOG_TOL * lv.max(1.0) {
                        return Err(Error::Invariant {
                            n: f.value().clone(),
                            message: format!("log_v = {lv} but log(exact V) = {ln_exact}"),
                        });
                    }
                    Some(v)
                }
                Err(Error::CapExceeded { .. }) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };

        Ok(Self {
            n: f.value().clone(),
            tau,
            omega2,
            is_square: f.is_square(),
            log_v: lv,
            s,
            s_star,
            residual,
            normalized_residual,
            lower_ratio,
            upper_ratio,
            s_ratio,
            exact_v: exact,
        })
    }

    fn bounds(&self) -> Option<(f64, f64)> {
        let ln_n = big_ln(&self.n);
        if self.tau < 2 {
            return None;
        }
        let t2 = (self.tau as f64).powi(2);
        Some((t2 / 4.0 * ln_n, 3.0 * t2 / 8.0 * ln_n))
    }

    /// `tau^2/4 log n <= S(n) <= 3 tau^2/8 log n`, each side padded by `tol * |bound|`.
    pub fn s_bounds_hold(&self, tol: f64) -> bool {
        match self.bounds() {
            Some((lo, hi)) => self.s >= lo - tol * lo && self.s <= hi + tol * hi,
            None => true,
        }
    }

    /// `log V(n) <= 3 tau^2/8 log n`, padded by `tol * bound`.
    pub fn upper_bound_holds(&self, tol: f64) -> bool {
        match self.bounds() {
            Some((_, hi)) => self.log_v <= hi + tol * hi,
            None => true,
        }
    }

    /// `S(n) - log V(n) >= -tol * max(1, S(n))`.
    pub fn residual_nonnegative(&self, tol: f64) -> bool {
        self.residual >= -tol * self.s.max(1.0)
    }

    /// `S(n) = tau(n)^2/4 log n` exactly attained (within `tol`); happens at primes.
    pub fn lower_bound_attained(&self, tol: f64) -> bool {
        self.s_ratio.is_some_and(|r| (r - 0.25).abs() <= tol * 0.25)
    }
}

/// Report for `n`, with divisor and exact-mode caps at their defaults.
pub fn report(n: &BigUint, want_exact: bool) -> Result<VandermondeReport> {
    let f = factor(n)?;
    let ds = DivisorList::new(&f)?;
    VandermondeReport::from_divisors(&ds, want_exact, DEFAULT_EXACT_CAP)
}

//! Exact checks of the divisor-log identities.
//!
//! Both sides of the second-moment identities are quadratic forms in formal
//! variables `x_p` (one per prime factor, standing for `log p`). Comparing
//! coefficients as exact rationals proves the identity for that shape of
//! factorization without relying on any property of the logarithms; a
//! floating evaluation at `x_p = log p` is run alongside as a cross-check.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::arith::{big_ln, Factorization};
use crate::divisors::DivisorList;
use crate::error::{Error, Result};
use crate::sum::CompensatedSum;
use crate::vandermonde::product_tree;

/// Default ceiling on the bit size of `n^tau(n)` in [`check_eq1_exact`].
pub const DEFAULT_EQ1_BITSIZE_CAP: u64 = 1 << 20;

/// Relative tolerance of the floating cross-checks.
pub const FLOAT_TOL: f64 = 1e-9;

/// Symmetric quadratic form `sum_{p,q} c[p][q] x_p x_q` with exact rational coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadraticForm {
    variables: Vec<BigUint>,
    coefficients: Vec<Vec<BigRational>>,
}

impl QuadraticForm {
    pub fn new(variables: Vec<BigUint>, coefficients: Vec<Vec<BigRational>>) -> Result<Self> {
        let k = variables.len();
        if coefficients.len() != k || coefficients.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidFactorization(format!(
                "coefficient matrix is not {k} x {k}"
            )));
        }
        #[allow(clippy::needless_range_loop)]
        for i in 0..k {
            for j in 0..i {
                if coefficients[i][j] != coefficients[j][i] {
                    return Err(Error::InvalidFactorization(format!(
                        "coefficient matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            variables,
            coefficients,
        })
    }

    pub fn zero(variables: Vec<BigUint>) -> Self {
        let k = variables.len();
        Self {
            variables,
            coefficients: vec![vec![BigRational::zero(); k]; k],
        }
    }

    fn from_integer_matrix(variables: Vec<BigUint>, m: &[Vec<i128>], denom: i64) -> Self {
        let coefficients = m
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&c| BigRational::new(BigInt::from(c), BigInt::from(denom)))
                    .collect()
            })
            .collect();
        Self {
            variables,
            coefficients,
        }
    }

    pub fn variables(&self) -> &[BigUint] {
        &self.variables
    }

    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    pub fn coefficient(&self, i: usize, j: usize) -> &BigRational {
        &self.coefficients[i][j]
    }

    /// Coefficient of `x_p x_q` by prime, zero if either prime is absent.
    pub fn coefficient_of(&self, p: &BigUint, q: &BigUint) -> BigRational {
        let i = self.variables.iter().position(|v| v == p);
        let j = self.variables.iter().position(|v| v == q);
        match (i, j) {
            (Some(i), Some(j)) => self.coefficients[i][j].clone(),
            _ => BigRational::zero(),
        }
    }

    pub fn scaled(&self, factor: &BigRational) -> Self {
        Self {
            variables: self.variables.clone(),
            coefficients: self
                .coefficients
                .iter()
                .map(|row| row.iter().map(|c| c * factor).collect())
                .collect(),
        }
    }

    /// Sum of two forms over the same variables.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.variables != other.variables {
            return Err(Error::InvalidFactorization(
                "forms over different variables".into(),
            ));
        }
        Ok(Self {
            variables: self.variables.clone(),
            coefficients: self
                .coefficients
                .iter()
                .zip(&other.coefficients)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
        })
    }

    /// Block-diagonal combination over the union of two disjoint variable sets,
    /// variables kept in ascending order.
    pub fn direct_sum(&self, other: &Self) -> Result<Self> {
        let mut vars: Vec<BigUint> = self
            .variables
            .iter()
            .chain(&other.variables)
            .cloned()
            .collect();
        vars.sort();
        if vars.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidFactorization("forms share a variable".into()));
        }
        let coefficients = vars
            .iter()
            .map(|p| {
                vars.iter()
                    .map(|q| self.coefficient_of(p, q) + other.coefficient_of(p, q))
                    .collect()
            })
            .collect();
        Ok(Self {
            variables: vars,
            coefficients,
        })
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut acc = CompensatedSum::new();
        for (i, row) in self.coefficients.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                acc += c.to_f64().unwrap_or(f64::NAN) * x[i] * x[j];
            }
        }
        acc.value()
    }

    /// Value at `x_p = log p`.
    pub fn evaluate_at_logs(&self) -> f64 {
        let logs: Vec<f64> = self.variables.iter().map(big_ln).collect();
        self.evaluate(&logs)
    }
}

impl fmt::Display for QuadraticForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for i in 0..self.dim() {
            for j in i..self.dim() {
                let c = if i == j {
                    self.coefficients[i][i].clone()
                } else {
                    &self.coefficients[i][j] * BigInt::from(2)
                };
                if c.is_zero() {
                    continue;
                }
                if !first {
                    write!(f, " + ")?;
                }
                first = false;
                let (p, q) = (&self.variables[i], &self.variables[j]);
                if i == j {
                    write!(f, "({c}) x_{p}^2")?;
                } else {
                    write!(f, "({c}) x_{p} x_{q}")?;
                }
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// Exponent vectors `(a_1, ..., a_k)` with `0 <= a_i <= alpha_i`, lexicographic order.
pub fn exponent_vectors(f: &Factorization) -> impl Iterator<Item = Vec<u32>> + '_ {
    let alphas: Vec<u32> = f.factors().iter().map(|pp| pp.exponent).collect();
    let mut next = Some(vec![0u32; alphas.len()]);
    std::iter::from_fn(move || {
        let current = next.take()?;
        let mut succ = current.clone();
        for i in (0..succ.len()).rev() {
            if succ[i] < alphas[i] {
                succ[i] += 1;
                next = Some(succ);
                break;
            }
            succ[i] = 0;
        }
        Some(current)
    })
}

fn require_nonunit(f: &Factorization, op: &'static str) -> Result<()> {
    if f.is_one() {
        Err(Error::UnitInput { op })
    } else {
        Ok(())
    }
}

fn primes_of(f: &Factorization) -> Vec<BigUint> {
    f.factors().iter().map(|pp| pp.prime.clone()).collect()
}

/// `sum_{d|n} v(d) v(d)^T` over integer vectors derived from exponent vectors.
fn gram(f: &Factorization, v: impl Fn(&[u32], &mut [i128])) -> Vec<Vec<i128>> {
    let k = f.factors().len();
    let mut acc = vec![vec![0i128; k]; k];
    let mut buf = vec![0i128; k];
    for a in exponent_vectors(f) {
        v(&a, &mut buf);
        #[allow(clippy::needless_range_loop)]
        for i in 0..k {
            for j in 0..k {
                acc[i][j] += buf[i] * buf[j];
            }
        }
    }
    acc
}

/// `sum_{d|n} (log d - log(n)/2)^2` expanded symbolically in `x_p = log p`.
pub fn lemma3_lhs_form(f: &Factorization) -> Result<QuadraticForm> {
    require_nonunit(f, "lemma3_lhs_form")?;
    let alphas: Vec<i128> = f
        .factors()
        .iter()
        .map(|pp| i128::from(pp.exponent))
        .collect();
    // 2 (a_p - alpha_p / 2) = 2 a_p - alpha_p, so the Gram matrix carries a factor 4.
    let m = gram(f, |a, out| {
        for (i, o) in out.iter_mut().enumerate() {
            *o = 2 * i128::from(a[i]) - alphas[i];
        }
    });
    Ok(QuadraticForm::from_integer_matrix(primes_of(f), &m, 4))
}

/// `tau(n) sum_{p^alpha || n} (alpha x_p)^2 (alpha + 2) / (12 alpha)`.
pub fn lemma3_rhs_form(f: &Factorization) -> Result<QuadraticForm> {
    require_nonunit(f, "lemma3_rhs_form")?;
    let tau = BigInt::from(f.tau());
    let mut form = QuadraticForm::zero(primes_of(f));
    for (i, pp) in f.factors().iter().enumerate() {
        let a = BigInt::from(pp.exponent);
        form.coefficients[i][i] =
            BigRational::new(&tau * &a * &a * (&a + 2), BigInt::from(12) * &a);
    }
    Ok(form)
}

/// `sum_{d|n} (log d)^2` expanded symbolically.
pub fn second_moment_lhs_form(f: &Factorization) -> Result<QuadraticForm> {
    require_nonunit(f, "second_moment_lhs_form")?;
    let m = gram(f, |a, out| {
        for (o, &ai) in out.iter_mut().zip(a) {
            *o = i128::from(ai);
        }
    });
    Ok(QuadraticForm::from_integer_matrix(primes_of(f), &m, 1))
}

/// `tau(n) sum (log p^alpha)^2 (alpha+2)/(12 alpha) + tau(n) (sum log(p^alpha) / 2)^2`.
pub fn second_moment_rhs_form(f: &Factorization) -> Result<QuadraticForm> {
    let diag = lemma3_rhs_form(f)?;
    let tau = BigInt::from(f.tau());
    let alphas: Vec<BigInt> = f
        .factors()
        .iter()
        .map(|pp| BigInt::from(pp.exponent))
        .collect();
    let coefficients = alphas
        .iter()
        .map(|ap| {
            alphas
                .iter()
                .map(|aq| BigRational::new(&tau * ap * aq, BigInt::from(4)))
                .collect()
        })
        .collect();
    let rank_one = QuadraticForm {
        variables: primes_of(f),
        coefficients,
    };
    diag.add(&rank_one)
}

/// Outcome of one identity check: exact coefficient equality plus the float cross-check.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub exact: bool,
    /// Left side summed directly over the divisors at `x_p = log p`.
    pub float_lhs: f64,
    /// Right-hand form evaluated at `x_p = log p`.
    pub float_rhs: f64,
}

impl IdentityCheck {
    pub fn float_agrees(&self) -> bool {
        let scale = self
            .float_lhs
            .abs()
            .max(self.float_rhs.abs())
            .max(f64::MIN_POSITIVE);
        (self.float_lhs - self.float_rhs).abs() <= FLOAT_TOL * scale
    }

    pub fn passed(&self) -> bool {
        self.exact && self.float_agrees()
    }
}

/// `sum_{d|n} g(log d)` with divisors generated from exponent vectors.
fn direct_sum(f: &Factorization, g: impl Fn(f64) -> f64) -> f64 {
    let logs: Vec<f64> = f.factors().iter().map(|pp| big_ln(&pp.prime)).collect();
    exponent_vectors(f)
        .map(|a| {
            let ln_d: f64 = a.iter().zip(&logs).map(|(&e, l)| f64::from(e) * l).sum();
            g(ln_d)
        })
        .collect::<CompensatedSum>()
        .value()
}

fn divided_by_tau(form: &QuadraticForm, f: &Factorization) -> QuadraticForm {
    form.scaled(&BigRational::new(1.into(), BigInt::from(f.tau())))
}

pub fn variance_check(f: &Factorization) -> Result<IdentityCheck> {
    let lhs = lemma3_lhs_form(f)?;
    let rhs = lemma3_rhs_form(f)?;
    let exact = divided_by_tau(&lhs, f) == divided_by_tau(&rhs, f);
    let half = f.ln() / 2.0;
    Ok(IdentityCheck {
        exact,
        float_lhs: direct_sum(f, |l| (l - half).powi(2)),
        float_rhs: rhs.evaluate_at_logs(),
    })
}

pub fn second_moment_check(f: &Factorization) -> Result<IdentityCheck> {
    let lhs = second_moment_lhs_form(f)?;
    let rhs = second_moment_rhs_form(f)?;
    let exact = divided_by_tau(&lhs, f) == divided_by_tau(&rhs, f);
    Ok(IdentityCheck {
        exact,
        float_lhs: direct_sum(f, |l| l * l),
        float_rhs: rhs.evaluate_at_logs(),
    })
}

/// Second-moment identity about `log(n)/2`, checked coefficient by coefficient.
pub fn verify_lemma3(f: &Factorization) -> Result<bool> {
    Ok(variance_check(f)?.passed())
}

/// Expanded identity for `sum_{d|n} (log d)^2`, checked coefficient by coefficient.
pub fn verify_second_moment(f: &Factorization) -> Result<bool> {
    Ok(second_moment_check(f)?.passed())
}

/// `(prod_{d|n} d)^2 == n^tau(n)` in exact integers.
///
/// Refused with [`Error::BitSizeCapExceeded`] when `n^tau` would need more
/// than `bit_cap` bits.
pub fn check_eq1_exact(ds: &DivisorList, bit_cap: u64) -> Result<bool> {
    let n = ds.n();
    let tau = ds.len() as u64;
    let bits = tau * n.bits();
    if bits > bit_cap {
        return Err(Error::BitSizeCapExceeded { bits, cap: bit_cap });
    }
    let product = product_tree(ds.to_big_vec());
    let tau = u32::try_from(tau).expect("bounded by the bit-size cap");
    Ok(&product * &product == n.pow(tau))
}

/// Float form of the divisor-log sum identity: `(sum log d, tau/2 log n)`.
pub fn divisor_product_float(ds: &DivisorList) -> (f64, f64) {
    let lhs = ds.logs().into_iter().collect::<CompensatedSum>().value();
    (lhs, ds.len() as f64 / 2.0 * ds.factorization().ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::factor_u64;
    use num_traits::One;

    fn f(n: u64) -> Factorization {
        factor_u64(n).unwrap()
    }

    fn q(num: i64, den: i64) -> BigRational {
        BigRational::new(num.into(), den.into())
    }

    fn p(n: u64) -> BigUint {
        BigUint::from(n)
    }

    #[test]
    fn divisor_product_examples() {
        for n in [1u64, 4, 6, 360, 65536] {
            let ds = DivisorList::new(&f(n)).unwrap();
            assert!(
                check_eq1_exact(&ds, DEFAULT_EQ1_BITSIZE_CAP).unwrap(),
                "n = {n}"
            );
        }
    }

    #[test]
    fn divisor_product_bit_cap() {
        let ds = DivisorList::new(&f(720_720)).unwrap();
        assert!(matches!(
            check_eq1_exact(&ds, 1000),
            Err(Error::BitSizeCapExceeded { cap: 1000, .. })
        ));
        let (lhs, rhs) = divisor_product_float(&ds);
        assert!((lhs - rhs).abs() < 1e-9 * rhs);
    }

    #[test]
    fn lhs_examples() {
        // p^2: sum_{a=0..2} (a-1)^2 = 2
        let l = lemma3_lhs_form(&f(49)).unwrap();
        assert_eq!(l.coefficient(0, 0), &q(2, 1));
        // pq: x_p^2 + x_q^2
        let l = lemma3_lhs_form(&f(15)).unwrap();
        assert_eq!(l.coefficient_of(&p(3), &p(3)), q(1, 1));
        assert_eq!(l.coefficient_of(&p(5), &p(5)), q(1, 1));
        assert_eq!(l.coefficient_of(&p(3), &p(5)), q(0, 1));
        // p: two copies of (x/2)^2
        let l = lemma3_lhs_form(&f(13)).unwrap();
        assert_eq!(l.coefficient(0, 0), &q(1, 2));
    }

    #[test]
    fn rhs_examples() {
        assert_eq!(lemma3_rhs_form(&f(13)).unwrap().coefficient(0, 0), &q(1, 2));
        assert_eq!(lemma3_rhs_form(&f(49)).unwrap().coefficient(0, 0), &q(2, 1));
        let r = lemma3_rhs_form(&f(15)).unwrap();
        assert_eq!(r.coefficient(0, 0), &q(1, 1));
        assert_eq!(r.coefficient(1, 1), &q(1, 1));
        assert_eq!(r.coefficient(0, 1), &q(0, 1));
    }

    #[test]
    fn unit_is_rejected() {
        let one = f(1);
        assert!(lemma3_lhs_form(&one).is_err());
        assert!(lemma3_rhs_form(&one).is_err());
        assert!(verify_lemma3(&one).is_err());
        assert!(verify_second_moment(&one).is_err());
    }

    #[test]
    fn variance_form_examples() {
        assert!(verify_lemma3(&f(12)).unwrap());
        for k in 1..=8 {
            let pk = f(3u64.pow(k));
            assert!(verify_lemma3(&pk).unwrap());
            let a = i64::from(k);
            // closed form alpha (alpha+1) (alpha+2) / 12
            let expected = q(a * (a + 1) * (a + 2), 12);
            assert_eq!(lemma3_lhs_form(&pk).unwrap().coefficient(0, 0), &expected);
        }
        assert!(verify_lemma3(&f(2 * 3 * 5 * 7 * 11)).unwrap());
    }

    #[test]
    fn second_moment_examples() {
        // n = p: x^2 on the left, x^2/2 + x^2/2 on the right.
        let l = second_moment_lhs_form(&f(7)).unwrap();
        let r = second_moment_rhs_form(&f(7)).unwrap();
        assert_eq!(l.coefficient(0, 0), &q(1, 1));
        assert_eq!(r, l);
        assert!(verify_second_moment(&f(7)).unwrap());
        assert!(verify_second_moment(&f(35)).unwrap());
        assert!(verify_second_moment(&f(72)).unwrap());
    }

    #[test]
    fn a_wrong_identity_is_caught() {
        // Drop the rank-one term: the exact comparison must fail.
        let fac = f(72);
        let lhs = second_moment_lhs_form(&fac).unwrap();
        let rhs = lemma3_rhs_form(&fac).unwrap();
        assert_ne!(lhs, rhs);
    }

    #[test]
    fn exponent_vectors_lexicographic() {
        let v: Vec<Vec<u32>> = exponent_vectors(&f(12)).collect();
        assert_eq!(
            v,
            vec![
                vec![0, 0],
                vec![0, 1],
                vec![1, 0],
                vec![1, 1],
                vec![2, 0],
                vec![2, 1]
            ]
        );
        assert_eq!(
            exponent_vectors(&f(1)).collect::<Vec<_>>(),
            vec![Vec::<u32>::new()]
        );
    }

    #[test]
    fn form_construction_validates() {
        let vars = vec![p(2), p(3)];
        let asym = vec![vec![q(1, 1), q(1, 2)], vec![q(1, 3), q(1, 1)]];
        assert!(QuadraticForm::new(vars.clone(), asym).is_err());
        assert!(QuadraticForm::new(vars.clone(), vec![vec![q(1, 1)]]).is_err());
        let sym = vec![vec![q(1, 1), q(1, 2)], vec![q(1, 2), q(0, 1)]];
        let form = QuadraticForm::new(vars, sym).unwrap();
        // x^2 + x y at (1, 2) = 1 + 2
        assert!((form.evaluate(&[1.0, 2.0]) - 3.0).abs() < 1e-15);
        assert_eq!(form.to_string(), "(1) x_2^2 + (1) x_2 x_3");
    }

    #[test]
    fn direct_sum_merges_sorted() {
        let a = lemma3_lhs_form(&f(9)).unwrap();
        let b = lemma3_lhs_form(&f(10)).unwrap();
        let s = a.direct_sum(&b).unwrap();
        assert_eq!(s.variables(), &[p(2), p(3), p(5)]);
        assert!(a.direct_sum(&a).is_err());
        assert_eq!(s.coefficient_of(&p(3), &p(3)), q(2, 1));
        assert!(s.coefficient_of(&p(2), &p(3)).is_zero());
        let one = BigRational::one();
        assert_eq!(a.scaled(&one), a);
    }
}

//! Exact arithmetic in the field `Q(sqrt(m) : m squarefree)`.
//!
//! A scalar is a finite sum `sum_m q_m * sqrt(m)` over squarefree positive
//! integers `m`, with rational `q_m`; `m = 1` carries the rational part.
//! Distinct square roots of squarefree integers are linearly independent
//! over the rationals, so the zero test is exact: a scalar vanishes iff
//! every `q_m` does. This is the minimal coefficient field in which the
//! orthogonality tests `<c_j, k> = 0` can be decided without floating
//! error.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;
use std::fmt;

pub type Rational = BigRational;

/// Element of `Q` extended by square roots of squarefree integers.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct ExactScalar {
    /// Map from squarefree radicand to rational coefficient. Zero
    /// coefficients are never stored, so equality is structural.
    terms: BTreeMap<u64, Rational>,
}

/// Split `n >= 1` as `s^2 * m` with `m` squarefree; returns `(s, m)`.
pub fn squarefree_split(n: u64) -> (u64, u64) {
    assert!(n >= 1, "radicand must be positive");
    let mut s = 1u64;
    let mut m = n;
    let mut p = 2u64;
    while p * p <= m {
        while m % (p * p) == 0 {
            m /= p * p;
            s *= p;
        }
        p += 1;
    }
    (s, m)
}

impl ExactScalar {
    pub fn zero() -> Self {
        ExactScalar::default()
    }

    pub fn from_int(n: i64) -> Self {
        Self::from_rational(Rational::from_integer(BigInt::from(n)))
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Self::from_rational(Rational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn from_rational(q: Rational) -> Self {
        let mut terms = BTreeMap::new();
        if !q.is_zero() {
            terms.insert(1, q);
        }
        ExactScalar { terms }
    }

    /// `sqrt(n)` for a positive integer `n`, reduced to squarefree form.
    pub fn sqrt(n: u64) -> Self {
        let (s, m) = squarefree_split(n);
        let mut terms = BTreeMap::new();
        terms.insert(m, Rational::from_integer(BigInt::from(s)));
        ExactScalar { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Rational coefficient attached to the squarefree radicand `m`.
    pub fn coeff(&self, m: u64) -> Rational {
        self.terms.get(&m).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn radicands(&self) -> impl Iterator<Item = u64> + '_ {
        self.terms.keys().copied()
    }

    fn insert(&mut self, m: u64, q: Rational) {
        if q.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(e) => {
                e.insert(q);
            }
            Entry::Occupied(mut e) => {
                let sum = e.get().clone() + q;
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (&m, q) in &other.terms {
            out.insert(m, q.clone());
        }
        out
    }

    pub fn negate(&self) -> Self {
        ExactScalar {
            terms: self.terms.iter().map(|(&m, q)| (m, -q.clone())).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.negate())
    }

    pub fn scale(&self, q: &Rational) -> Self {
        if q.is_zero() {
            return Self::zero();
        }
        ExactScalar {
            terms: self
                .terms
                .iter()
                .map(|(&m, c)| (m, c.clone() * q.clone()))
                .collect(),
        }
    }

    pub fn scale_int(&self, n: i64) -> Self {
        self.scale(&Rational::from_integer(BigInt::from(n)))
    }

    /// Product, using `sqrt(a) * sqrt(b) = s * sqrt(m)` with `ab = s^2 m`.
    pub fn mul(&self, other: &Self) -> Self {
        let mut out = ExactScalar::zero();
        for (&a, qa) in &self.terms {
            for (&b, qb) in &other.terms {
                let (s, m) = squarefree_split(a * b);
                let q = qa.clone() * qb.clone() * Rational::from_integer(BigInt::from(s));
                out.insert(m, q);
            }
        }
        out
    }

    pub fn to_f64(&self) -> f64 {
        self.terms
            .iter()
            .map(|(&m, q)| q.to_f64().unwrap_or(f64::NAN) * (m as f64).sqrt())
            .sum()
    }

    /// High-precision rational enclosure of the value: returns `(lo, hi)`
    /// with `lo <= value <= hi` and `hi - lo` below `2^-bits`-ish. Used by
    /// tests as an independent check on the symbolic zero test.
    pub fn rational_bounds(&self, bits: u32) -> (Rational, Rational) {
        let eps = Rational::new(BigInt::one(), BigInt::from(2u8).pow(bits));
        let mut lo = Rational::zero();
        let mut hi = Rational::zero();
        for (&m, q) in &self.terms {
            let (rlo, rhi) = rational_sqrt_bounds(m, &eps);
            if q.is_positive() {
                lo += q.clone() * rlo;
                hi += q.clone() * rhi;
            } else {
                lo += q.clone() * rhi;
                hi += q.clone() * rlo;
            }
        }
        (lo, hi)
    }
}

/// Rational bounds `lo <= sqrt(m) <= hi` with `hi - lo <= eps`, by Newton
/// iteration from above (monotone once past the root).
fn rational_sqrt_bounds(m: u64, eps: &Rational) -> (Rational, Rational) {
    let m_rat = Rational::from_integer(BigInt::from(m));
    if m == 1 {
        return (m_rat.clone(), m_rat);
    }
    let two = Rational::from_integer(BigInt::from(2));
    let mut x = m_rat.clone(); // m >= sqrt(m) for m >= 1
    loop {
        let next = (x.clone() + m_rat.clone() / x.clone()) / two.clone();
        // x stays >= sqrt(m); lower bound from m/x <= sqrt(m).
        let lo = m_rat.clone() / next.clone();
        if next.clone() - lo.clone() <= *eps {
            return (lo, next);
        }
        x = next;
    }
}

impl fmt::Display for ExactScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (&m, q) in &self.terms {
            let neg = q.is_negative();
            let aq = q.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
                first = false;
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let one = aq.is_one();
            if m == 1 {
                write_ratio(f, &aq)?;
            } else if one {
                write!(f, "sqrt({m})")?;
            } else {
                write_ratio(f, &aq)?;
                write!(f, "*sqrt({m})")?;
            }
        }
        Ok(())
    }
}

fn write_ratio(f: &mut fmt::Formatter<'_>, q: &Rational) -> fmt::Result {
    if q.denom().is_one() {
        write!(f, "{}", q.numer())
    } else {
        write!(f, "{}/{}", q.numer(), q.denom())
    }
}

//! Truncated formal power series over the complex numbers.
//!
//! A [`Series`] is a polynomial in `n` variables stored sparsely and cut off
//! at a fixed truncation order `N`: every operation discards monomials of
//! total degree above `N`. Because all maps we compose have no constant
//! term, truncation commutes with composition and the degree-`d` part of any
//! result only ever depends on degrees `<= d` of the inputs; nothing below
//! the cap is approximate.
//!
//! Coefficients are `Complex64`. After every operation the result is
//! normalized: coefficients of magnitude below `zero_tol * (1 + max_norm)`
//! are dropped, and signed zeros are canonicalized so equal series compare
//! and serialize identically.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Coefficient = Complex64;

/// Default threshold below which a magnitude counts as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

/// Numerical thresholds shared across membership predicates and solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    /// Threshold below which a magnitude is treated as zero.
    pub zero_tol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            zero_tol: DEFAULT_ZERO_TOL,
        }
    }
}

impl Tolerance {
    pub fn new(zero_tol: f64) -> Self {
        assert!(
            zero_tol.is_finite() && zero_tol >= 0.0,
            "zero_tol must be finite and nonnegative"
        );
        Tolerance { zero_tol }
    }
}

/// A monomial exponent: one `u32` per variable.
///
/// Ordered graded-lexicographically: lower total degree first, and within a
/// degree block the lexicographically larger tuple first, so `x1^2` precedes
/// `x1*x2` precedes `x2^2`. Iteration over a [`Series`] and every serialized
/// term list follow this order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Exponent(Vec<u32>);

impl Exponent {
    pub fn new(entries: Vec<u32>) -> Self {
        assert!(!entries.is_empty(), "exponent needs at least one variable");
        Exponent(entries)
    }

    pub fn zero(n: usize) -> Self {
        Exponent::new(vec![0; n])
    }

    /// The exponent of the coordinate `x_i` (0-based).
    pub fn unit(n: usize, i: usize) -> Self {
        assert!(i < n, "variable index out of range");
        let mut e = vec![0; n];
        e[i] = 1;
        Exponent(e)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, i: usize) -> u32 {
        self.0[i]
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub(crate) fn sum(&self, other: &Exponent) -> Exponent {
        debug_assert_eq!(self.len(), other.len());
        Exponent(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self - unit(i)`, or `None` when the entry is already zero.
    pub(crate) fn lowered(&self, i: usize) -> Option<Exponent> {
        if self.0[i] == 0 {
            return None;
        }
        let mut e = self.0.clone();
        e[i] -= 1;
        Some(Exponent(e))
    }

    pub(crate) fn raised(&self, i: usize) -> Exponent {
        let mut e = self.0.clone();
        e[i] += 1;
        Exponent(e)
    }

    /// All exponents in `n` variables of total degree exactly `d`, in the
    /// graded-lex order above.
    pub fn enumerate_degree(n: usize, d: u32) -> Vec<Exponent> {
        fn rec(out: &mut Vec<Vec<u32>>, prefix: &mut Vec<u32>, rest: usize, d: u32) {
            if rest == 1 {
                prefix.push(d);
                out.push(prefix.clone());
                prefix.pop();
                return;
            }
            for e in (0..=d).rev() {
                prefix.push(e);
                rec(out, prefix, rest - 1, d - e);
                prefix.pop();
            }
        }
        assert!(n >= 1);
        let mut out = Vec::new();
        rec(&mut out, &mut Vec::new(), n, d);
        out.into_iter().map(Exponent).collect()
    }
}

impl Ord for Exponent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0).reverse())
    }
}

impl PartialOrd for Exponent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<u32>::deserialize(d)?;
        if v.is_empty() {
            return Err(D::Error::custom("empty exponent"));
        }
        Ok(Exponent(v))
    }
}

/// A truncated formal power series: finitely many monomials of total degree
/// `<= order`, coefficients complex.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    n: usize,
    order: u32,
    terms: BTreeMap<Exponent, Complex64>,
}

fn canonical(c: Complex64) -> Complex64 {
    // +0.0 and -0.0 are equal but not bit-identical; keep one representative
    // so equal series serialize to equal bytes.
    let re = if c.re == 0.0 { 0.0 } else { c.re };
    let im = if c.im == 0.0 { 0.0 } else { c.im };
    Complex64::new(re, im)
}

impl Series {
    pub fn zero(n: usize, order: u32) -> Self {
        assert!(n >= 1, "dimension must be at least 1");
        assert!(order >= 1, "truncation order must be at least 1");
        Series {
            n,
            order,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, order: u32, c: Complex64) -> Self {
        let mut s = Series::zero(n, order);
        s.terms.insert(Exponent::zero(n), c);
        s.normalize();
        s
    }

    /// The coordinate series `x_i` (0-based index).
    pub fn coordinate(n: usize, order: u32, i: usize) -> Self {
        assert!(i < n, "variable index out of range");
        let mut s = Series::zero(n, order);
        s.terms
            .insert(Exponent::unit(n, i), Complex64::new(1.0, 0.0));
        s
    }

    pub fn monomial(n: usize, order: u32, exp: Exponent, c: Complex64) -> Result<Self> {
        let mut s = Series::zero(n, order);
        s.push_term(exp, c)?;
        s.normalize();
        Ok(s)
    }

    pub fn from_terms<I>(n: usize, order: u32, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Exponent, Complex64)>,
    {
        let mut s = Series::zero(n, order);
        for (e, c) in terms {
            s.push_term(e, c)?;
        }
        s.normalize();
        Ok(s)
    }

    fn push_term(&mut self, exp: Exponent, c: Complex64) -> Result<()> {
        if exp.len() != self.n {
            return Err(Error::DimensionMismatch {
                left: exp.len(),
                right: self.n,
            });
        }
        if !c.re.is_finite() || !c.im.is_finite() {
            return Err(Error::invalid("non-finite coefficient"));
        }
        if exp.degree() <= self.order {
            *self
                .terms
                .entry(exp)
                .or_insert_with(|| Complex64::new(0.0, 0.0)) += c;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, &Complex64)> {
        self.terms.iter()
    }

    pub fn coeff(&self, exp: &Exponent) -> Complex64 {
        self.terms
            .get(exp)
            .copied()
            .unwrap_or_else(|| Complex64::new(0.0, 0.0))
    }

    pub fn constant_term(&self) -> Complex64 {
        self.coeff(&Exponent::zero(self.n))
    }

    /// Largest coefficient magnitude; 0 for the zero series.
    pub fn max_norm(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Drop coefficients below `zero_tol * (1 + max_norm)` and canonicalize
    /// signed zeros. Every operation ends here.
    fn normalize(&mut self) {
        let cut = DEFAULT_ZERO_TOL * (1.0 + self.max_norm());
        self.terms.retain(|_, c| c.norm() >= cut);
        for c in self.terms.values_mut() {
            *c = canonical(*c);
        }
    }

    fn check_compatible(&self, other: &Series) -> Result<()> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                left: self.n,
                right: other.n,
            });
        }
        if self.order != other.order {
            return Err(Error::OrderMismatch {
                left: self.order,
                right: other.order,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Series) -> Result<Series> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (e, c) in &other.terms {
            *out.terms
                .entry(e.clone())
                .or_insert_with(|| Complex64::new(0.0, 0.0)) += *c;
        }
        out.normalize();
        Ok(out)
    }

    pub fn sub(&self, other: &Series) -> Result<Series> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Series {
        self.scale(Complex64::new(-1.0, 0.0))
    }

    pub fn scale(&self, c: Complex64) -> Series {
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v *= c;
        }
        out.normalize();
        out
    }

    pub fn mul(&self, other: &Series) -> Result<Series> {
        self.check_compatible(other)?;
        let mut acc: BTreeMap<Exponent, Complex64> = BTreeMap::new();
        for (ea, ca) in &self.terms {
            let da = ea.degree();
            for (eb, cb) in &other.terms {
                if da + eb.degree() > self.order {
                    continue;
                }
                *acc.entry(ea.sum(eb))
                    .or_insert_with(|| Complex64::new(0.0, 0.0)) += ca * cb;
            }
        }
        let mut out = Series {
            n: self.n,
            order: self.order,
            terms: acc,
        };
        out.normalize();
        Ok(out)
    }

    /// `self^k` at the same truncation order; `k = 0` gives the constant 1.
    /// Binary exponentiation, so hostile exponents from parsed input cost
    /// log k multiplications, not k.
    pub fn pow(&self, k: u32) -> Series {
        if k > self.order && self.constant_term() == Complex64::new(0.0, 0.0) {
            // every term of self^k has degree >= k, all beyond the cap
            return Series::zero(self.n, self.order);
        }
        let mut out = Series::constant(self.n, self.order, Complex64::new(1.0, 0.0));
        let mut base = self.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                out = out.mul(&base).expect("same ring");
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base).expect("same ring");
            }
        }
        out
    }

    /// Substitute `u` for the variables: `self(u_1, ..., u_n)`.
    ///
    /// Every `u_i` must live in one common ring (same dimension and the same
    /// order as `self`) and have zero constant term; the latter is what
    /// makes truncation exact under composition.
    pub fn substitute(&self, u: &[Series]) -> Result<Series> {
        if u.len() != self.n {
            return Err(Error::DimensionMismatch {
                left: self.n,
                right: u.len(),
            });
        }
        let target_n = u[0].n;
        for (i, ui) in u.iter().enumerate() {
            if ui.n != target_n {
                return Err(Error::DimensionMismatch {
                    left: target_n,
                    right: ui.n,
                });
            }
            if ui.order != self.order {
                return Err(Error::OrderMismatch {
                    left: self.order,
                    right: ui.order,
                });
            }
            let c0 = ui.constant_term().norm();
            if c0 > DEFAULT_ZERO_TOL {
                return Err(Error::NonzeroConstantTerm {
                    component: i,
                    magnitude: c0,
                });
            }
        }

        // Cache powers of each u_i up to the largest exponent that appears.
        let mut max_pow = vec![0u32; self.n];
        for e in self.terms.keys() {
            for i in 0..self.n {
                max_pow[i] = max_pow[i].max(e.get(i));
            }
        }
        let one = Series::constant(target_n, self.order, Complex64::new(1.0, 0.0));
        let mut pows: Vec<Vec<Series>> = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let mut col = vec![one.clone()];
            for k in 1..=max_pow[i] {
                let prev = &col[(k - 1) as usize];
                col.push(prev.mul(&u[i])?);
            }
            pows.push(col);
        }

        let mut acc = Series::zero(target_n, self.order);
        for (e, c) in &self.terms {
            let mut term = Series::constant(target_n, self.order, *c);
            for i in 0..self.n {
                let k = e.get(i);
                if k > 0 {
                    term = term.mul(&pows[i][k as usize])?;
                }
            }
            acc = acc.add(&term)?;
        }
        Ok(acc)
    }

    /// Partial derivative with respect to variable `i` (0-based).
    pub fn derivative(&self, i: usize) -> Result<Series> {
        if i >= self.n {
            return Err(Error::IndexOutOfRange {
                index: i,
                n: self.n,
            });
        }
        let mut out = Series::zero(self.n, self.order);
        for (e, c) in &self.terms {
            if let Some(lower) = e.lowered(i) {
                let k = e.get(i) as f64;
                *out.terms
                    .entry(lower)
                    .or_insert_with(|| Complex64::new(0.0, 0.0)) += c * k;
            }
        }
        out.normalize();
        Ok(out)
    }

    /// The homogeneous part of total degree `d`.
    pub fn degree_part(&self, d: u32) -> Series {
        let mut out = Series::zero(self.n, self.order);
        for (e, c) in &self.terms {
            if e.degree() == d {
                out.terms.insert(e.clone(), *c);
            }
        }
        out
    }

    /// Re-truncate downward. Raising the order is refused: the discarded
    /// coefficients are unknowable.
    pub fn truncated(&self, order: u32) -> Result<Series> {
        if order > self.order {
            return Err(Error::OrderRaise {
                requested: order,
                available: self.order,
            });
        }
        assert!(order >= 1);
        let mut out = Series::zero(self.n, order);
        for (e, c) in &self.terms {
            if e.degree() <= order {
                out.terms.insert(e.clone(), *c);
            }
        }
        Ok(out)
    }

    /// Max-norm of the difference with degrees restricted to `<= through`.
    pub(crate) fn max_norm_through(&self, through: u32) -> f64 {
        self.terms
            .iter()
            .filter(|(e, _)| e.degree() <= through)
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(
                f,
                "({}{}{}i)",
                c.re,
                if c.im < 0.0 { "-" } else { "+" },
                c.im.abs()
            )?;
            for (i, &k) in e.entries().iter().enumerate() {
                if k == 1 {
                    write!(f, "*x{}", i + 1)?;
                } else if k > 1 {
                    write!(f, "*x{}^{}", i + 1, k)?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    exp: Vec<u32>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct SeriesJson {
    n: usize,
    order: u32,
    terms: Vec<TermJson>,
}

impl Serialize for Series {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SeriesJson {
            n: self.n,
            order: self.order,
            terms: self
                .terms
                .iter()
                .map(|(e, c)| TermJson {
                    exp: e.entries().to_vec(),
                    re: c.re,
                    im: c.im,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Series {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = SeriesJson::deserialize(d)?;
        if raw.n == 0 {
            return Err(D::Error::custom("dimension must be at least 1"));
        }
        if raw.order == 0 {
            return Err(D::Error::custom("order must be at least 1"));
        }
        let mut s = Series::zero(raw.n, raw.order);
        for t in raw.terms {
            if t.exp.len() != raw.n {
                return Err(D::Error::custom("exponent length does not match n"));
            }
            let e = Exponent::new(t.exp);
            if e.degree() > raw.order {
                return Err(D::Error::custom("term degree exceeds order"));
            }
            s.push_term(e, Complex64::new(t.re, t.im))
                .map_err(|err| D::Error::custom(err.to_string()))?;
        }
        s.normalize();
        Ok(s)
    }
}

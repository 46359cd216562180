//! Formal transformations: n-tuples of series with zero constant term and
//! an invertible linear part, under composition.
//!
//! The group operations (compose, inverse) are exact at the truncation
//! order. Subgroup membership is tolerance-based: volume preservation is
//! measured on the Jacobian determinant through degree N-1, the highest
//! degree the truncated data determines.

use std::collections::BTreeSet;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::series::{Exponent, Series, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GroupTag {
    /// Invertible formal transformations.
    GS,
    /// Volume preserving: Jacobian determinant 1 through degree N-1.
    SS,
    /// Linear part lower triangular, real, with positive diagonal.
    BL,
    /// Linear part upper triangular, real, with positive diagonal.
    BU,
}

impl fmt::Display for GroupTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GroupTag::GS => "GS",
            GroupTag::SS => "SS",
            GroupTag::BL => "BL",
            GroupTag::BU => "BU",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for GroupTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gs" => Ok(GroupTag::GS),
            "ss" => Ok(GroupTag::SS),
            "bl" => Ok(GroupTag::BL),
            "bu" => Ok(GroupTag::BU),
            other => Err(Error::invalid(format!("unknown group tag '{other}'"))),
        }
    }
}

/// An element of the substitution monoid: n series over n variables, zero
/// constant terms. Invertibility is checked where the group structure is
/// actually used, not at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformation {
    n: usize,
    order: u32,
    components: Vec<Series>,
    linear_part: CMatrix,
}

fn extract_linear(components: &[Series]) -> CMatrix {
    let n = components.len();
    let mut u = CMatrix::zeros(n, n);
    for (i, comp) in components.iter().enumerate() {
        for j in 0..n {
            u[(i, j)] = comp.coeff(&Exponent::unit(n, j));
        }
    }
    u
}

impl Transformation {
    pub fn new(components: Vec<Series>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("a transformation needs components"));
        }
        let n = components.len();
        let order = components[0].order();
        for (i, comp) in components.iter().enumerate() {
            if comp.n() != n {
                return Err(Error::DimensionMismatch {
                    left: comp.n(),
                    right: n,
                });
            }
            if comp.order() != order {
                return Err(Error::OrderMismatch {
                    left: comp.order(),
                    right: order,
                });
            }
            let c0 = comp.constant_term().norm();
            if c0 > 0.0 {
                return Err(Error::NonzeroConstantTerm {
                    component: i,
                    magnitude: c0,
                });
            }
        }
        let linear_part = extract_linear(&components);
        Ok(Transformation {
            n,
            order,
            components,
            linear_part,
        })
    }

    pub fn identity(n: usize, order: u32) -> Self {
        let components = (0..n).map(|i| Series::coordinate(n, order, i)).collect();
        Transformation::new(components).expect("identity is well-formed")
    }

    /// The linear map x -> Ux as a transformation.
    pub fn from_linear(u: &CMatrix, order: u32) -> Result<Self> {
        if !u.is_square() {
            return Err(Error::DimensionMismatch {
                left: u.rows(),
                right: u.cols(),
            });
        }
        let n = u.rows();
        let mut components = Vec::with_capacity(n);
        for i in 0..n {
            let terms = (0..n).map(|j| (Exponent::unit(n, j), u[(i, j)]));
            components.push(Series::from_terms(n, order, terms)?);
        }
        Transformation::new(components)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn components(&self) -> &[Series] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &Series {
        &self.components[i]
    }

    pub fn linear_part(&self) -> &CMatrix {
        &self.linear_part
    }

    pub fn is_identity_linear(&self) -> bool {
        self.linear_part == CMatrix::identity(self.n)
    }

    fn check_compatible(&self, other: &Transformation) -> Result<()> {
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

    /// Composition a.compose(b) = a after b: each component of a evaluated
    /// on b's components.
    pub fn compose(&self, other: &Transformation) -> Result<Transformation> {
        self.check_compatible(other)?;
        let components = self
            .components
            .iter()
            .map(|c| c.substitute(&other.components))
            .collect::<Result<Vec<_>>>()?;
        Transformation::new(components)
    }

    /// Compositional inverse, degree by degree: the linear part inverts as
    /// a matrix, and each higher degree of v solves U v_d = -(degree-d part
    /// of the nonlinear terms of u evaluated on the already-known v).
    pub fn inverse(&self, tol: &Tolerance) -> Result<Transformation> {
        let u_inv = crate::linalg::invert(&self.linear_part, tol.zero_tol)?;
        let mut v = Transformation::from_linear(&u_inv, self.order)?;
        if self.order == 1 {
            return Ok(v);
        }
        // nonlinear part of u
        let mut tail = Vec::with_capacity(self.n);
        for comp in &self.components {
            tail.push(comp.sub(&comp.degree_part(1))?);
        }
        for d in 2..=self.order {
            // degree-d part of tail(v) only involves degrees < d of v
            let mut correction = Vec::with_capacity(self.n);
            for t in &tail {
                correction.push(t.substitute(v.components())?.degree_part(d));
            }
            // v_d = -U^{-1} * correction, assembled monomial by monomial
            let mut new_components = v.components.clone();
            for m in Exponent::enumerate_degree(self.n, d) {
                let rhs: Vec<Complex64> = correction.iter().map(|c| c.coeff(&m)).collect();
                if rhs.iter().all(|z| z.norm() == 0.0) {
                    continue;
                }
                let sol = u_inv.matvec(&rhs);
                for (i, z) in sol.iter().enumerate() {
                    let mono = Series::monomial(self.n, self.order, m.clone(), -z)?;
                    new_components[i] = new_components[i].add(&mono)?;
                }
            }
            v = Transformation::new(new_components)?;
        }
        Ok(v)
    }

    /// Determinant of the Jacobian matrix, as a series. The degree-N part
    /// would need coefficients beyond the truncation, so read results only
    /// through degree N-1.
    pub fn jacobian_det(&self) -> Result<Series> {
        let n = self.n;
        let mut jac = Vec::with_capacity(n * n);
        for comp in &self.components {
            for j in 0..n {
                jac.push(comp.derivative(j)?);
            }
        }
        // Laplace expansion over column subsets, memoized: minors of the
        // trailing rows against each set of unused columns.
        let full: u32 = (1 << n) - 1;
        let mut memo: Vec<Option<Series>> = vec![None; 1 << n];
        memo[full as usize] = Some(Series::constant(n, self.order, Complex64::new(1.0, 0.0)));
        fn minor(
            jac: &[Series],
            n: usize,
            used: u32,
            memo: &mut Vec<Option<Series>>,
        ) -> Result<Series> {
            if let Some(s) = &memo[used as usize] {
                return Ok(s.clone());
            }
            let row = used.count_ones() as usize;
            let order = jac[0].order();
            let mut acc = Series::zero(n, order);
            let mut sign = 1.0;
            for j in 0..n {
                if used & (1 << j) != 0 {
                    continue;
                }
                let entry = &jac[row * n + j];
                if !entry.is_empty() {
                    let sub = minor(jac, n, used | (1 << j), memo)?;
                    let term = entry.mul(&sub)?.scale(Complex64::new(sign, 0.0));
                    acc = acc.add(&term)?;
                }
                sign = -sign;
            }
            memo[used as usize] = Some(acc.clone());
            Ok(acc)
        }
        minor(&jac, n, 0, &mut memo)
    }

    /// Subgroup membership at the given tolerance.
    pub fn classify(&self, tol: &Tolerance) -> Result<BTreeSet<GroupTag>> {
        let mut tags = BTreeSet::new();
        let zt = tol.zero_tol;
        let lu = crate::linalg::lu_decompose(&self.linear_part);
        let invertible = lu.min_pivot > zt * (1.0 + self.linear_part.max_abs());
        if !invertible {
            return Ok(tags);
        }
        tags.insert(GroupTag::GS);

        let jd = self.jacobian_det()?;
        let one = Series::constant(self.n, self.order, Complex64::new(1.0, 0.0));
        let dev = jd.sub(&one)?;
        let through = self.order.saturating_sub(1).max(1);
        if dev.max_norm_through(through) <= zt {
            tags.insert(GroupTag::SS);
        }

        let u = &self.linear_part;
        let real = u.max_imag() <= zt;
        let diag_pos = u.diagonal().iter().all(|d| d.re > zt && d.im.abs() <= zt);
        if real && diag_pos {
            if u.is_lower_triangular(zt) {
                tags.insert(GroupTag::BL);
            }
            if u.is_upper_triangular(zt) {
                tags.insert(GroupTag::BU);
            }
        }
        Ok(tags)
    }

    /// Max over components of the max coefficient magnitude of the
    /// difference.
    pub fn distance(&self, other: &Transformation) -> Result<f64> {
        self.check_compatible(other)?;
        let mut d = 0.0f64;
        for (a, b) in self.components.iter().zip(&other.components) {
            d = d.max(a.sub(b)?.max_norm());
        }
        Ok(d)
    }

    /// Re-truncate downward (raising the order is an error).
    pub fn truncated(&self, order: u32) -> Result<Transformation> {
        let components = self
            .components
            .iter()
            .map(|c| c.truncated(order))
            .collect::<Result<Vec<_>>>()?;
        Transformation::new(components)
    }

    pub fn max_norm(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.max_norm())
            .fold(0.0, f64::max)
    }
}

/// Deterministic random invertible transformation: linear part is a
/// perturbed identity, higher coefficients are uniform in a small box.
pub fn random_invertible(n: usize, order: u32, seed: u64) -> Transformation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut components = Vec::with_capacity(n);
    for i in 0..n {
        let mut terms: Vec<(Exponent, Complex64)> = Vec::new();
        for j in 0..n {
            let base = if i == j { 1.0 } else { 0.0 };
            let re = base + 0.3 * rng.gen_range(-1.0..1.0);
            let im = 0.3 * rng.gen_range(-1.0..1.0);
            terms.push((Exponent::unit(n, j), Complex64::new(re, im)));
        }
        for d in 2..=order {
            for m in Exponent::enumerate_degree(n, d) {
                let re = 0.4 * rng.gen_range(-1.0..1.0);
                let im = 0.4 * rng.gen_range(-1.0..1.0);
                terms.push((m, Complex64::new(re, im)));
            }
        }
        components.push(Series::from_terms(n, order, terms).expect("finite terms"));
    }
    let t = Transformation::new(components).expect("zero constant terms by construction");
    // a perturbed identity is almost surely invertible; regenerate on the
    // rare failure so callers always get a group element
    if crate::linalg::det(t.linear_part()).norm() < 1e-6 {
        return random_invertible(n, order, seed.wrapping_add(0x9e3779b97f4a7c15));
    }
    t
}

#[derive(Serialize, Deserialize)]
struct TransformationJson {
    n: usize,
    order: u32,
    components: Vec<Series>,
}

impl Serialize for Transformation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TransformationJson {
            n: self.n,
            order: self.order,
            components: self.components.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Transformation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = TransformationJson::deserialize(d)?;
        if raw.components.len() != raw.n {
            return Err(D::Error::custom("component count does not match n"));
        }
        for c in &raw.components {
            if c.order() != raw.order {
                return Err(D::Error::custom("component order does not match order"));
            }
        }
        Transformation::new(raw.components).map_err(|e| D::Error::custom(e.to_string()))
    }
}

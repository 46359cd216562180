//! Flows of polynomial vector fields and the inverse problems: formal
//! logarithms (find X with time-1 flow u) and functional roots (find g
//! whose k-fold self-composition is u).
//!
//! The forward direction is a single matrix exponential: the derivation
//! p -> Dp.X on the monomial basis of degrees 1..N is a finite matrix
//! because every component of X has degree >= 1 (the derivation never
//! lowers degree), so the truncated flow is exact, not integrated.
//!
//! The inverse problems go degree by degree. At degree d the unknown
//! homogeneous correction enters through an invertible-or-singular linear
//! stage; the stage operator's eigenvalues are classical divisor formulas
//! in the eigenvalues of the linear part, and a singular stage with an
//! unreachable right-hand side is returned as an [`Obstruction`] naming
//! the exact monomial, divisor, and resonance that block the solve.
//! Each stage is exact: a degree-d correction feeds back into degrees
//! >= 2d-1 only, so one pass over d = 2..N suffices.

use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::linfun::{self, BranchChoice};
use crate::resonance::{classify_witness, ResonanceWitness};
use crate::series::{Exponent, Series, Tolerance};
use crate::transform::Transformation;

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

// ---------------------------------------------------------------------------
// Vector fields

/// A polynomial vector field: n series with zero constant term. The flow
/// of y' = X(y) is what everything here exponentiates.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    n: usize,
    order: u32,
    components: Vec<Series>,
    linear_part: CMatrix,
}

impl VectorField {
    pub fn new(components: Vec<Series>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("a vector field needs components"));
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
        let mut linear_part = CMatrix::zeros(n, n);
        for (i, comp) in components.iter().enumerate() {
            for j in 0..n {
                linear_part[(i, j)] = comp.coeff(&Exponent::unit(n, j));
            }
        }
        Ok(VectorField {
            n,
            order,
            components,
            linear_part,
        })
    }

    pub fn zero(n: usize, order: u32) -> Self {
        let components = (0..n).map(|_| Series::zero(n, order)).collect();
        VectorField::new(components).expect("zero field is well-formed")
    }

    /// The linear field x -> Bx.
    pub fn from_linear(b: &CMatrix, order: u32) -> Result<Self> {
        let n = b.rows();
        let mut components = Vec::with_capacity(n);
        for i in 0..n {
            let terms = (0..n).map(|j| (Exponent::unit(n, j), b[(i, j)]));
            components.push(Series::from_terms(n, order, terms)?);
        }
        VectorField::new(components)
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

    pub fn max_norm(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.max_norm())
            .fold(0.0, f64::max)
    }

    pub fn distance(&self, other: &VectorField) -> Result<f64> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                left: self.n,
                right: other.n,
            });
        }
        let mut d = 0.0f64;
        for (a, b) in self.components.iter().zip(&other.components) {
            d = d.max(a.sub(b)?.max_norm());
        }
        Ok(d)
    }

    /// Sum of the diagonal partial derivatives. Reliable through degree
    /// order-1, like every derivative of truncated data.
    pub fn divergence(&self) -> Result<Series> {
        let mut acc = Series::zero(self.n, self.order);
        for (i, comp) in self.components.iter().enumerate() {
            acc = acc.add(&comp.derivative(i)?)?;
        }
        Ok(acc)
    }

    pub fn scale(&self, c: Complex64) -> VectorField {
        let components = self.components.iter().map(|s| s.scale(c)).collect();
        VectorField::new(components).expect("scaling preserves shape")
    }

    fn into_components(self) -> Vec<Series> {
        self.components
    }
}

impl Serialize for VectorField {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = ser.serialize_struct("VectorField", 3)?;
        st.serialize_field("n", &self.n)?;
        st.serialize_field("order", &self.order)?;
        st.serialize_field("components", &self.components)?;
        st.end()
    }
}

impl<'de> serde::Deserialize<'de> for VectorField {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(serde::Deserialize)]
        struct Raw {
            n: usize,
            components: Vec<Series>,
        }
        let raw = Raw::deserialize(d)?;
        if raw.components.len() != raw.n {
            return Err(serde::de::Error::custom("component count does not match n"));
        }
        VectorField::new(raw.components).map_err(|e| serde::de::Error::custom(e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Monomial basis and operator matrices

/// The graded-lex list of all monomials of degree 1..=max_degree in n
/// variables; the index space for every operator matrix below.
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    n: usize,
    max_degree: u32,
    exps: Vec<Exponent>,
    index: HashMap<Exponent, usize>,
}

impl MonomialBasis {
    pub fn new(n: usize, max_degree: u32) -> Self {
        assert!(max_degree >= 1);
        let mut exps = Vec::new();
        for d in 1..=max_degree {
            exps.extend(Exponent::enumerate_degree(n, d));
        }
        let index = exps
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, e)| (e, i))
            .collect();
        MonomialBasis {
            n,
            max_degree,
            exps,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn exponent(&self, i: usize) -> &Exponent {
        &self.exps[i]
    }

    pub fn exponents(&self) -> &[Exponent] {
        &self.exps
    }

    pub fn index_of(&self, e: &Exponent) -> Option<usize> {
        self.index.get(e).copied()
    }
}

/// A linear operator on truncated polynomials, stored against its basis.
/// Used both for derivations (p -> Dp.X) and substitutions (p -> p o u).
#[derive(Debug, Clone)]
pub struct DerivationMatrix {
    pub basis: MonomialBasis,
    pub matrix: CMatrix,
}

fn derivation_matrix_capped(x: &VectorField, cap: u32) -> DerivationMatrix {
    let n = x.n();
    let basis = MonomialBasis::new(n, cap);
    let dim = basis.len();
    let mut matrix = CMatrix::zeros(dim, dim);
    for (col, q) in basis.exponents().iter().enumerate() {
        for i in 0..n {
            let qi = q.get(i);
            if qi == 0 {
                continue;
            }
            let lowered = q.lowered(i).expect("qi > 0");
            for (e, coef) in x.component(i).terms() {
                let target = lowered.sum(e);
                if target.degree() > cap {
                    continue;
                }
                let row = basis.index_of(&target).expect("degree within cap");
                matrix[(row, col)] += coef * qi as f64;
            }
        }
    }
    DerivationMatrix { basis, matrix }
}

/// Matrix of the derivation p -> Dp.X on the degree-1..N monomial basis.
/// Because X never lowers degree, truncation at N is exact for all degrees
/// it retains.
pub fn derivation_matrix(x: &VectorField) -> DerivationMatrix {
    derivation_matrix_capped(x, x.order())
}

/// Matrix of the substitution p -> p o u on the degree-1..N basis.
/// Composition of maps turns into products of these matrices (in reversed
/// order), which is what makes it a useful independent oracle.
pub fn substitution_matrix(u: &Transformation) -> Result<DerivationMatrix> {
    let n = u.n();
    let cap = u.order();
    let basis = MonomialBasis::new(n, cap);
    let dim = basis.len();
    // powers[i][k] = u_i^k
    let one = Series::constant(n, cap, ONE);
    let mut powers: Vec<Vec<Series>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut col = vec![one.clone()];
        for k in 1..=cap {
            let next = col[(k - 1) as usize].mul(u.component(i))?;
            col.push(next);
        }
        powers.push(col);
    }
    let mut matrix = CMatrix::zeros(dim, dim);
    for (col, q) in basis.exponents().iter().enumerate() {
        let mut img = Series::constant(n, cap, ONE);
        for i in 0..n {
            let k = q.get(i);
            if k > 0 {
                img = img.mul(&powers[i][k as usize])?;
            }
        }
        for (e, coef) in img.terms() {
            if let Some(row) = basis.index_of(e) {
                matrix[(row, col)] = *coef;
            }
        }
    }
    Ok(DerivationMatrix { basis, matrix })
}

fn columns_to_transformation(
    basis: &MonomialBasis,
    m: &CMatrix,
    n: usize,
    order: u32,
) -> Result<Transformation> {
    let mut components = Vec::with_capacity(n);
    for i in 0..n {
        let terms = (0..basis.len()).map(|r| (basis.exponent(r).clone(), m[(r, i)]));
        components.push(Series::from_terms(n, order, terms)?);
    }
    Transformation::new(components)
}

fn flow_truncated(x: &VectorField, t: f64, cap: u32) -> Result<Transformation> {
    let n = x.n();
    let dm = derivation_matrix_capped(x, cap);
    let a = dm.matrix.scale(Complex64::new(t, 0.0));

    // Balance before exponentiating. Conjugating X by the dilation
    // x -> rx scales a degree-g coefficient by r^(g-1), which on the
    // derivation matrix is the diagonal similarity diag(r^deg). A tail
    // with huge coefficients (a log near a resonance) otherwise sets the
    // global scaling of mat_exp and leaks absolute error into the
    // low-degree blocks that are perfectly well conditioned on their own.
    let scale = t.abs().max(1.0);
    let head = 1.0 + scale * x.linear_part().max_abs();
    let mut r = 1.0f64;
    for g in 2..=cap {
        let mut c = 0.0f64;
        for comp in x.components() {
            c = c.max(comp.degree_part(g).max_norm());
        }
        c *= scale;
        if c > head {
            r = r.min((head / c).powf(1.0 / f64::from(g - 1)));
        }
    }
    let r = r.max(1e-2);
    let exp = if r < 1.0 {
        let degs: Vec<i32> = dm
            .basis
            .exponents()
            .iter()
            .map(|e| e.degree() as i32)
            .collect();
        let dim = degs.len();
        let mut b = a;
        for p in 0..dim {
            for q in 0..dim {
                b[(p, q)] *= r.powi(degs[p] - degs[q]);
            }
        }
        let mut e = linalg::mat_exp(&b);
        for p in 0..dim {
            for q in 0..dim {
                e[(p, q)] *= r.powi(degs[q] - degs[p]);
            }
        }
        e
    } else {
        linalg::mat_exp(&a)
    };
    columns_to_transformation(&dm.basis, &exp, n, cap)
}

/// Time-t map of y' = X(y), exact in every degree <= N: the matrix
/// exponential of the finite derivation matrix applied to the coordinates.
pub fn exp_flow(x: &VectorField, t: f64) -> Result<Transformation> {
    flow_truncated(x, t, x.order())
}

// ---------------------------------------------------------------------------
// Obstructions

/// Certificate that a degree-d stage is unsolvable: the coefficient of
/// `monomial` in component `component` enters only through `divisor`,
/// which vanishes, while the right-hand side `residual` does not.
#[derive(Debug, Clone, PartialEq)]
pub struct Obstruction {
    pub degree: u32,
    /// Component index, 1-based.
    pub component: usize,
    pub monomial: Exponent,
    pub divisor: Complex64,
    pub residual: Complex64,
    pub witness: Option<ResonanceWitness>,
}

impl fmt::Display for Obstruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "obstruction at degree {}: component {}, monomial {:?} has divisor {:.3e} against residual {:.3e}",
            self.degree,
            self.component,
            self.monomial.entries(),
            self.divisor.norm(),
            self.residual.norm()
        )
    }
}

impl Serialize for Obstruction {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct C {
            re: f64,
            im: f64,
        }
        let mut st = ser.serialize_struct("Obstruction", 6)?;
        st.serialize_field("degree", &self.degree)?;
        st.serialize_field("component", &self.component)?;
        st.serialize_field("monomial", self.monomial.entries())?;
        st.serialize_field(
            "divisor",
            &C {
                re: self.divisor.re,
                im: self.divisor.im,
            },
        )?;
        st.serialize_field(
            "residual",
            &C {
                re: self.residual.re,
                im: self.residual.im,
            },
        )?;
        st.serialize_field("resonance", &self.witness)?;
        st.end()
    }
}

// ---------------------------------------------------------------------------
// Shared degree-stage machinery

/// Index into stage vectors: component s, then position of m within the
/// degree block, flattened as s * M_d + idx(m).
fn stage_len(n: usize, m_count: usize) -> usize {
    n * m_count
}

fn degree_residual_vec(
    target: &Transformation,
    current: &Transformation,
    d: u32,
    exps: &[Exponent],
) -> Result<Vec<Complex64>> {
    let n = target.n();
    let mut out = vec![ZERO; stage_len(n, exps.len())];
    for s in 0..n {
        let td = target.component(s).degree_part(d);
        let cd = current.component(s).degree_part(d);
        let diff = td.sub(&cd)?;
        for (i, e) in exps.iter().enumerate() {
            out[s * exps.len() + i] = diff.coeff(e);
        }
    }
    Ok(out)
}

fn scrub_reals(w: &mut [Complex64], enabled: bool, tol: f64) {
    if !enabled {
        return;
    }
    for c in w.iter_mut() {
        if c.im.abs() <= tol * (1.0 + c.norm()) {
            *c = Complex64::new(c.re, 0.0);
        }
    }
}

fn add_homogeneous(components: &mut [Series], exps: &[Exponent], w: &[Complex64]) -> Result<()> {
    let n = components.len();
    let m_count = exps.len();
    for s in 0..n {
        let terms = exps
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), w[s * m_count + i]))
            .filter(|(_, c)| c.norm() > 0.0);
        let add = Series::from_terms(components[s].n(), components[s].order(), terms)?;
        components[s] = components[s].add(&add)?;
    }
    Ok(())
}

enum Stage {
    Solved { w: Vec<Complex64>, unique: bool },
    Inconsistent,
}

fn solve_stage(op: &CMatrix, rhs: &[Complex64], tol: &Tolerance) -> Stage {
    let lu = linalg::lu_decompose(op);
    if lu.min_pivot > tol.zero_tol * (1.0 + op.max_abs()) {
        return Stage::Solved {
            w: lu.solve_vec(rhs),
            unique: true,
        };
    }
    let rhs_norm = rhs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let mn = linalg::min_norm_solve(op, rhs, tol.zero_tol * (1.0 + op.max_abs()));
    if mn.residual <= tol.zero_tol * (1.0 + rhs_norm) {
        Stage::Solved {
            w: mn.solution,
            unique: mn.rank == op.cols(),
        }
    } else {
        Stage::Inconsistent
    }
}

/// Matrix of p -> p(Cx) on the degree-d monomials (the symmetric-power
/// action of C). Built by multiplying up linear forms, one variable at a
/// time.
fn sym_power_matrix(c: &CMatrix, d: u32) -> CMatrix {
    let n = c.rows();
    let exps = Exponent::enumerate_degree(n, d);
    let m_count = exps.len();
    // linear forms (Cx)_i as coefficient maps over degree-1 exponents
    let lin: Vec<Vec<Complex64>> = (0..n)
        .map(|i| (0..n).map(|j| c[(i, j)]).collect())
        .collect();
    // images by increasing degree, keyed by exponent
    let mut prev: HashMap<Exponent, Vec<Complex64>> = HashMap::new();
    let zero_key = Exponent::zero(n);
    prev.insert(zero_key, vec![ONE]);
    let mut prev_exps = vec![Exponent::zero(n)];
    for level in 1..=d {
        let cur_exps = Exponent::enumerate_degree(n, level);
        let cur_index: HashMap<&Exponent, usize> =
            cur_exps.iter().enumerate().map(|(i, e)| (e, i)).collect();
        let mut cur: HashMap<Exponent, Vec<Complex64>> = HashMap::with_capacity(cur_exps.len());
        for m in &cur_exps {
            let i = (0..n).find(|&i| m.get(i) > 0).expect("degree >= 1");
            let m_prev = m.lowered(i).expect("positive entry");
            let base = &prev[&m_prev];
            let mut img = vec![ZERO; cur_exps.len()];
            // multiply the degree-(level-1) image by the linear form (Cx)_i
            for (pe_pos, pe) in prev_exps.iter().enumerate() {
                let coef = base[pe_pos];
                if coef == ZERO {
                    continue;
                }
                for j in 0..n {
                    let cij = lin[i][j];
                    if cij == ZERO {
                        continue;
                    }
                    let target = pe.raised(j);
                    let pos = cur_index[&target];
                    img[pos] += coef * cij;
                }
            }
            cur.insert(m.clone(), img);
        }
        prev = cur;
        prev_exps = cur_exps;
    }
    let mut out = CMatrix::zeros(m_count, m_count);
    for (col, m) in exps.iter().enumerate() {
        let img = &prev[m];
        for (row, v) in img.iter().enumerate() {
            out[(row, col)] = *v;
        }
    }
    out
}

/// Degree-d diagonal block of the derivation of the linear field Bx:
/// entry [m - e_i + e_j, m] += m_i B_ij.
fn linear_derivation_block(b: &CMatrix, d: u32) -> CMatrix {
    let n = b.rows();
    let exps = Exponent::enumerate_degree(n, d);
    let index: HashMap<&Exponent, usize> = exps.iter().enumerate().map(|(i, e)| (e, i)).collect();
    let mut out = CMatrix::zeros(exps.len(), exps.len());
    for (col, m) in exps.iter().enumerate() {
        for i in 0..n {
            let mi = m.get(i);
            if mi == 0 {
                continue;
            }
            let lowered = m.lowered(i).expect("mi > 0");
            for j in 0..n {
                let bij = b[(i, j)];
                if bij == ZERO {
                    continue;
                }
                let target = lowered.raised(j);
                let row = index[&target];
                out[(row, col)] += bij * mi as f64;
            }
        }
    }
    out
}

/// The degree-d stage operator of the logarithm problem: the map sending
/// a homogeneous degree-d field w to the degree-d change of the time-1
/// flow when w is added to the generator. Assembled in closed form as
///   (I (x) e^{L_d}) phi1(B (x) I - I (x) L_d),
/// where L_d is the degree-d derivation block of the linear field Bx and
/// phi1(Z) is the integral of e^{sZ} over [0,1]. The formula is the
/// variation-of-constants integral of the flow derivative; it equals the
/// unit-monomial-column assembly exactly (the nonlinear tail of the
/// generator only reaches degree d through two insertions of w, which is
/// degree 2d-1 > d) and costs one exponential instead of n*M_d flows.
fn phi_operator(b: &CMatrix, d: u32) -> CMatrix {
    let n = b.rows();
    let l_d = linear_derivation_block(b, d);
    let m_count = l_d.rows();
    let ident_m = CMatrix::identity(m_count);
    let ident_n = CMatrix::identity(n);
    let z = b.kron(&ident_m).sub(&ident_n.kron(&l_d));
    let (_, phi1) = linalg::exp_and_phi1(&z);
    let e_small = linalg::mat_exp(&l_d);
    // (I (x) e^{L_d}) * phi1, multiplied blockwise
    let dim = n * m_count;
    let mut out = CMatrix::zeros(dim, dim);
    for s in 0..n {
        for p in 0..m_count {
            for q in 0..m_count {
                let f = e_small[(p, q)];
                if f == ZERO {
                    continue;
                }
                for cidx in 0..dim {
                    let add = f * phi1[(s * m_count + q, cidx)];
                    out[(s * m_count + p, cidx)] += add;
                }
            }
        }
    }
    out
}

/// The degree-d stage operator of the k-th-root problem:
///   Psi_d = sum_{j=0}^{k-1} A^{k-1-j} (x) S_d(A^j),
/// the first-order effect of a homogeneous degree-d term of g on the
/// degree-d coefficients of the k-fold composition of g.
fn psi_operator(a_powers: &[CMatrix], d: u32) -> CMatrix {
    let k = a_powers.len();
    let n = a_powers[0].rows();
    let m_count = Exponent::enumerate_degree(n, d).len();
    let dim = n * m_count;
    let mut out = CMatrix::zeros(dim, dim);
    for j in 0..k {
        let left = &a_powers[k - 1 - j];
        let right = sym_power_matrix(&a_powers[j], d);
        out = out.add(&left.kron(&right));
    }
    out
}

// ---------------------------------------------------------------------------
// Obstruction reporting in eigen coordinates

struct EigenFrame {
    /// Eigenvalues of the linear part U (for resonance witnesses).
    lambda: Vec<Complex64>,
    vectors: CMatrix,
    inv_vectors: CMatrix,
}

impl EigenFrame {
    fn from_parts(lambda: Vec<Complex64>, vectors: CMatrix) -> Option<EigenFrame> {
        let inv = linalg::invert(&vectors, 1e-14).ok()?;
        Some(EigenFrame {
            lambda,
            vectors,
            inv_vectors: inv,
        })
    }

    /// Express a stage vector in eigen coordinates: the field transform
    /// w~(y) = V^{-1} w(V y), i.e. S_d(V) W (V^{-1})^T on coefficient
    /// matrices.
    fn to_eigen_coords(&self, rho: &[Complex64], d: u32, m_count: usize) -> Vec<Complex64> {
        let n = self.vectors.rows();
        let mut w = CMatrix::zeros(m_count, n);
        for s in 0..n {
            for i in 0..m_count {
                w[(i, s)] = rho[s * m_count + i];
            }
        }
        let s_v = sym_power_matrix(&self.vectors, d);
        let tilde = s_v.mul(&w).mul(&self.inv_vectors.transpose());
        let mut out = vec![ZERO; n * m_count];
        for s in 0..n {
            for i in 0..m_count {
                out[s * m_count + i] = tilde[(i, s)];
            }
        }
        out
    }
}

/// Pick the reported (component, monomial) pair: among vanishing divisors,
/// the one with the largest transformed residual.
fn build_obstruction(
    d: u32,
    exps: &[Exponent],
    frame: Option<&EigenFrame>,
    divisors: Option<&[Complex64]>,
    rho: &[Complex64],
    tol: &Tolerance,
) -> Obstruction {
    let m_count = exps.len();
    let (rho_rep, divisors): (Vec<Complex64>, Vec<Complex64>) = match (frame, divisors) {
        (Some(fr), Some(div)) => (fr.to_eigen_coords(rho, d, m_count), div.to_vec()),
        _ => (rho.to_vec(), vec![ZERO; rho.len()]),
    };
    let max_div = divisors.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let vanish_cut = tol.zero_tol * (1.0 + max_div) * 16.0;
    let mut best: Option<usize> = None;
    for (idx, delta) in divisors.iter().enumerate() {
        if delta.norm() > vanish_cut {
            continue;
        }
        if best.is_none_or(|b| rho_rep[idx].norm() > rho_rep[b].norm()) {
            best = Some(idx);
        }
    }
    // fall back to the largest residual entry if no divisor is flagged
    let idx = best.unwrap_or_else(|| {
        (0..rho_rep.len())
            .max_by(|&a, &b| rho_rep[a].norm().partial_cmp(&rho_rep[b].norm()).unwrap())
            .unwrap_or(0)
    });
    let s = idx / m_count;
    let m = exps[idx % m_count].clone();
    let witness = frame.and_then(|fr| classify_witness(&fr.lambda, s + 1, &m, 1e-6).ok());
    Obstruction {
        degree: d,
        component: s + 1,
        monomial: m,
        divisor: divisors[idx],
        residual: rho_rep[idx],
        witness,
    }
}

fn log_divisors(frame: &EigenFrame, exps: &[Exponent]) -> Vec<Complex64> {
    let n = frame.lambda.len();
    let mu: Vec<Complex64> = frame.lambda.iter().map(|l| l.ln()).collect();
    let m_count = exps.len();
    let mut out = vec![ZERO; n * m_count];
    for s in 0..n {
        for (i, m) in exps.iter().enumerate() {
            let q: Complex64 = m
                .entries()
                .iter()
                .zip(&mu)
                .map(|(&e, u)| *u * e as f64)
                .sum();
            let p = mu[s];
            let diff = q - p;
            out[s * m_count + i] = if diff.norm() <= 1e-12 * (1.0 + q.norm() + p.norm()) {
                p.exp()
            } else {
                (q.exp() - p.exp()) / diff
            };
        }
    }
    out
}

fn root_divisors(a_values: &[Complex64], k: u32, exps: &[Exponent]) -> Vec<Complex64> {
    let n = a_values.len();
    let m_count = exps.len();
    let mut out = vec![ZERO; n * m_count];
    for s in 0..n {
        for (i, m) in exps.iter().enumerate() {
            let mut am = ONE;
            for (j, &e) in m.entries().iter().enumerate() {
                if e > 0 {
                    am *= a_values[j].powu(e);
                }
            }
            let mut acc = ZERO;
            for j in 0..k {
                acc += a_values[s].powu(k - 1 - j) * am.powu(j);
            }
            out[s * m_count + i] = acc;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Logarithms and iterates

/// A formal logarithm plus bookkeeping: at which degrees the solution was
/// only determined up to the kernel (singular-but-consistent stages, where
/// the minimal-norm representative was taken).
#[derive(Debug, Clone)]
pub struct LogReport {
    pub field: VectorField,
    pub nonunique_degrees: Vec<u32>,
}

fn transformation_is_real(u: &Transformation, tol: &Tolerance) -> bool {
    let cut = tol.zero_tol * (1.0 + u.max_norm());
    u.components()
        .iter()
        .all(|c| c.terms().all(|(_, z)| z.im.abs() <= cut))
}

/// Find X with exp_flow(X, 1) = u through order N, or the obstruction
/// that rules it out.
///
/// The linear seed is the principal matrix logarithm; each higher degree
/// solves one linear stage whose operator is the flow's first variation
/// (see `phi_operator`). A singular stage with consistent right-hand side
/// takes the minimal-norm correction; an inconsistent one is a certified
/// obstruction carrying the vanishing divisor and its resonance witness.
pub fn log_transform(u: &Transformation, tol: &Tolerance) -> Result<VectorField> {
    log_transform_report(u, tol).map(|r| r.field)
}

pub fn log_transform_report(u: &Transformation, tol: &Tolerance) -> Result<LogReport> {
    let n = u.n();
    let order = u.order();
    let b = linfun::mat_log(u.linear_part(), tol)?;
    let realify = transformation_is_real(u, tol) && b.max_imag() == 0.0;
    let mut components = VectorField::from_linear(&b, order)?.into_components();
    let mut nonunique = Vec::new();
    let mut frame_cache: Option<Option<EigenFrame>> = None;
    let mut phi_cache: Vec<Option<CMatrix>> = vec![None; order as usize + 1];
    // The second sweep is iterative refinement: near-resonant stages
    // amplify rounding from the lower degrees, and re-solving against the
    // updated field's true residual recovers the lost digits.
    for pass in 0..2 {
        for d in 2..=order {
            let x_cur = VectorField::new(components.clone())?;
            let flow = flow_truncated(&x_cur, 1.0, d)?;
            let exps = Exponent::enumerate_degree(n, d);
            let rho = degree_residual_vec(&u.truncated(d)?, &flow, d, &exps)?;
            let phi = phi_cache[d as usize].get_or_insert_with(|| phi_operator(&b, d));
            match solve_stage(phi, &rho, tol) {
                Stage::Solved { mut w, unique } => {
                    scrub_reals(&mut w, realify, tol.zero_tol);
                    add_homogeneous(&mut components, &exps, &w)?;
                    if pass == 0 && !unique {
                        nonunique.push(d);
                    }
                }
                Stage::Inconsistent => {
                    let frame = frame_cache
                        .get_or_insert_with(|| {
                            linfun::eigen(u.linear_part())
                                .ok()
                                .and_then(|es| EigenFrame::from_parts(es.values, es.vectors))
                        })
                        .as_ref();
                    let divisors = frame.map(|fr| log_divisors(fr, &exps));
                    let ob = build_obstruction(d, &exps, frame, divisors.as_deref(), &rho, tol);
                    return Err(Error::Obstruction(Box::new(ob)));
                }
            }
        }
    }
    Ok(LogReport {
        field: VectorField::new(components)?,
        nonunique_degrees: nonunique,
    })
}

/// The continuous iterate f^t = exp_flow(log_transform(u), t).
pub fn iterate(u: &Transformation, t: f64, tol: &Tolerance) -> Result<Transformation> {
    let x = log_transform(u, tol)?;
    exp_flow(&x, t)
}

// ---------------------------------------------------------------------------
// Functional roots

/// Result of one root attempt: either the root, or the obstruction along
/// with the partial solution (all degrees below the obstruction solved).
#[derive(Debug, Clone)]
pub enum RootOutcome {
    Root(Transformation),
    Obstructed {
        obstruction: Obstruction,
        partial: Transformation,
    },
}

impl RootOutcome {
    pub fn root(&self) -> Option<&Transformation> {
        match self {
            RootOutcome::Root(g) => Some(g),
            RootOutcome::Obstructed { .. } => None,
        }
    }

    pub fn obstruction(&self) -> Option<&Obstruction> {
        match self {
            RootOutcome::Root(_) => None,
            RootOutcome::Obstructed { obstruction, .. } => Some(obstruction),
        }
    }
}

/// One enumerated branch of the all-branches scan.
#[derive(Debug, Clone)]
pub struct BranchOutcome {
    pub branch: BranchChoice,
    pub linear_root: CMatrix,
    pub outcome: RootOutcome,
}

/// Everything the exhaustive branch scan found.
#[derive(Debug, Clone)]
pub struct AllBranches {
    pub outcomes: Vec<BranchOutcome>,
    /// True when at least one branch was tried and every branch obstructed:
    /// no k-th root with any enumerated linear part exists at this order.
    pub certified_no_root: bool,
    /// True when u is real and no enumerated branch has a real linear
    /// part at all (so no real root can exist at linear order).
    pub no_real_linear_root: bool,
}

struct RootProblem<'a> {
    u: &'a Transformation,
    k: u32,
    a: CMatrix,
    a_values: Vec<Complex64>,
    lambda: Vec<Complex64>,
    vectors: CMatrix,
    realify: bool,
}

fn compose_power(g: &Transformation, k: u32) -> Result<Transformation> {
    let mut acc = g.clone();
    for _ in 1..k {
        acc = g.compose(&acc)?;
    }
    Ok(acc)
}

fn solve_root(problem: &RootProblem<'_>, tol: &Tolerance) -> Result<RootOutcome> {
    let u = problem.u;
    let n = u.n();
    let order = u.order();
    let k = problem.k;
    let mut a_powers = Vec::with_capacity(k as usize);
    let mut pw = CMatrix::identity(n);
    for _ in 0..k {
        a_powers.push(pw.clone());
        pw = pw.mul(&problem.a);
    }
    let mut components = Transformation::from_linear(&problem.a, order)?
        .components()
        .to_vec();
    let frame = EigenFrame::from_parts(problem.lambda.clone(), problem.vectors.clone());
    for d in 2..=order {
        let g_cur = Transformation::new(components.clone())?.truncated(d)?;
        let gk = compose_power(&g_cur, k)?;
        let exps = Exponent::enumerate_degree(n, d);
        let rho = degree_residual_vec(&u.truncated(d)?, &gk, d, &exps)?;
        let psi = psi_operator(&a_powers, d);
        match solve_stage(&psi, &rho, tol) {
            Stage::Solved { mut w, unique: _ } => {
                scrub_reals(&mut w, problem.realify, tol.zero_tol);
                add_homogeneous(&mut components, &exps, &w)?;
            }
            Stage::Inconsistent => {
                let divisors = frame
                    .as_ref()
                    .map(|_| root_divisors(&problem.a_values, k, &exps));
                let ob =
                    build_obstruction(d, &exps, frame.as_ref(), divisors.as_deref(), &rho, tol);
                let partial = Transformation::new(components)?;
                return Ok(RootOutcome::Obstructed {
                    obstruction: ob,
                    partial,
                });
            }
        }
    }
    Ok(RootOutcome::Root(Transformation::new(components)?))
}

fn branch_roots(values: &[Complex64], k: u32, branch: &BranchChoice) -> Vec<Complex64> {
    values
        .iter()
        .zip(branch.indices())
        .map(|(l, &b)| {
            let r = l.norm().powf(1.0 / k as f64);
            let theta = (l.arg() + std::f64::consts::TAU * b as f64) / k as f64;
            Complex64::from_polar(r, theta)
        })
        .collect()
}

fn matrix_from_eigenpairs(vectors: &CMatrix, values: &[Complex64]) -> Result<CMatrix> {
    let inv = linalg::invert(vectors, 1e-14).map_err(|_| Error::DefectiveLinearPart {
        condition: f64::INFINITY,
    })?;
    Ok(vectors.mul(&CMatrix::diag(values)).mul(&inv))
}

/// Solve g composed with itself k times = u, for one explicit branch of
/// the linear part's k-th root; see `functional_root_all_branches` for the
/// exhaustive version. An obstruction surfaces as `Error::Obstruction`.
pub fn functional_root(
    u: &Transformation,
    k: u32,
    branch: &BranchChoice,
    tol: &Tolerance,
) -> Result<Transformation> {
    if k < 2 {
        return Err(Error::invalid("root index k must be at least 2"));
    }
    let a = linfun::mat_root(u.linear_part(), k, branch, tol)?;
    let es = linfun::eigen(u.linear_part())?;
    let a_values = branch_roots(&es.values, k, branch);
    let realify =
        transformation_is_real(u, tol) && a.max_imag() <= tol.zero_tol * (1.0 + a.max_abs());
    let a = if realify { a.drop_imag() } else { a };
    let problem = RootProblem {
        u,
        k,
        a,
        a_values,
        lambda: es.values.clone(),
        vectors: es.vectors,
        realify,
    };
    match solve_root(&problem, tol)? {
        RootOutcome::Root(g) => Ok(g),
        RootOutcome::Obstructed { obstruction, .. } => {
            Err(Error::Obstruction(Box::new(obstruction)))
        }
    }
}

/// Eigenvector-basis variants used by the exhaustive scan. For a real map
/// whose linear part has a repeated real eigenvalue, real k-th roots can
/// act by rotation inside that eigenspace; those are only reachable if a
/// pair of real basis vectors is recombined into a conjugate pair v + iw,
/// v - iw. Each repeated real cluster therefore doubles the variants.
fn eigenbasis_variants(
    values: &[Complex64],
    vectors: &CMatrix,
    u_real: bool,
    scale: f64,
) -> Vec<CMatrix> {
    let mut variants = vec![vectors.clone()];
    if !u_real {
        return variants;
    }
    let n = values.len();
    let snap = 1e-7 * (1.0 + scale);
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut used = vec![false; n];
    for i in 0..n {
        if used[i] || values[i].im != 0.0 {
            continue;
        }
        let mut group = vec![i];
        used[i] = true;
        for j in (i + 1)..n {
            if !used[j] && values[j].im == 0.0 && (values[j] - values[i]).norm() <= snap {
                group.push(j);
                used[j] = true;
            }
        }
        if group.len() >= 2 {
            clusters.push(group);
        }
    }
    for cluster in &clusters {
        let mut extended = Vec::new();
        for v in &variants {
            let mut paired = v.clone();
            // recombine consecutive pairs within the cluster
            let mut it = cluster.chunks_exact(2);
            for pair in &mut it {
                let (p, q) = (pair[0], pair[1]);
                let col_p = v.col(p);
                let col_q = v.col(q);
                let plus: Vec<Complex64> = col_p
                    .iter()
                    .zip(&col_q)
                    .map(|(a, b)| a + Complex64::new(0.0, 1.0) * b)
                    .collect();
                let minus: Vec<Complex64> = col_p
                    .iter()
                    .zip(&col_q)
                    .map(|(a, b)| a - Complex64::new(0.0, 1.0) * b)
                    .collect();
                paired.set_col(p, &plus);
                paired.set_col(q, &minus);
            }
            extended.push(paired);
        }
        variants.extend(extended);
    }
    variants
}

/// Try every k^n branch combination of the linear part's k-th root (over
/// each eigenbasis variant), keeping only real linear roots when u is
/// real. Certification: if at least one branch ran and all obstructed,
/// no k-th root exists at this order with any enumerated linear part.
pub fn functional_root_all_branches(
    u: &Transformation,
    k: u32,
    tol: &Tolerance,
) -> Result<AllBranches> {
    if k < 2 {
        return Err(Error::invalid("root index k must be at least 2"));
    }
    let es = linfun::eigen(u.linear_part())?;
    if es.values.iter().any(|l| l.norm() == 0.0) {
        return Err(Error::ZeroEigenvalue);
    }
    let u_real = transformation_is_real(u, tol);
    let scale = u.linear_part().max_abs();
    let variants = eigenbasis_variants(&es.values, &es.vectors, u_real, scale);
    let real_cut = 1e-8 * (1.0 + scale.powf(1.0 / k as f64));
    let mut outcomes: Vec<BranchOutcome> = Vec::new();
    let mut seen: Vec<CMatrix> = Vec::new();
    for vectors in &variants {
        for branch in BranchChoice::enumerate_all(u.n(), k) {
            let a_values = branch_roots(&es.values, k, &branch);
            let a = match matrix_from_eigenpairs(vectors, &a_values) {
                Ok(a) => a,
                Err(_) => continue,
            };
            if u_real && a.max_imag() > real_cut {
                continue;
            }
            let a = if u_real { a.drop_imag() } else { a };
            let dup = seen
                .iter()
                .any(|b| b.sub(&a).max_abs() <= 1e-8 * (1.0 + a.max_abs()));
            if dup {
                continue;
            }
            seen.push(a.clone());
            let problem = RootProblem {
                u,
                k,
                a: a.clone(),
                a_values,
                lambda: es.values.clone(),
                vectors: vectors.clone(),
                realify: u_real,
            };
            let outcome = solve_root(&problem, tol)?;
            outcomes.push(BranchOutcome {
                branch,
                linear_root: a,
                outcome,
            });
        }
    }
    let certified = !outcomes.is_empty()
        && outcomes
            .iter()
            .all(|o| matches!(o.outcome, RootOutcome::Obstructed { .. }));
    let no_real = u_real && outcomes.is_empty();
    Ok(AllBranches {
        outcomes,
        certified_no_root: certified || no_real,
        no_real_linear_root: no_real,
    })
}

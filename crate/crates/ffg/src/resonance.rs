//! Eigenvalue resonances and their classification.
//!
//! A resonance is a multiplicative coincidence λ_s = λ₁^{m₁}···λ_n^{m_n}
//! with |m| ≥ 2. Each one either survives raising to every real power t
//! (λ_s^t = λ^{tm} for all t, with principal powers) or fails for some t;
//! the two cases are separated by an integer: writing
//! Log λ_s − Σ m_j Log λ_j = 2πik, the resonance is harmless exactly when
//! k = 0. Nonzero k is what blocks fractional iteration, so we call those
//! witnesses obstructive.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::series::Exponent;

/// Sampling grid used by the power-law cross-check. Chosen to expose every
/// branch integer |k| ≤ 15: a sample at t misses k only when k·t is an
/// integer, and no nonzero |k| ≤ 15 annihilates all of 1/2, 1/3, 2/3, 1/5
/// and 7/5 at once.
pub const DEFAULT_T_GRID: [f64; 5] = [0.5, 1.0 / 3.0, 2.0 / 3.0, 0.2, 1.4];

/// One resonance λ_s = λ^m together with its classification.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceWitness {
    /// Component index, 1-based.
    pub s: usize,
    pub m: Exponent,
    /// Branch integer: Log λ_s − Σ m_j Log λ_j = 2πik + residual.
    pub k: i64,
    pub obstructive: bool,
    /// |Log λ_s − Σ m_j Log λ_j − 2πik|.
    pub residual: f64,
}

impl Serialize for ResonanceWitness {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = ser.serialize_struct("ResonanceWitness", 5)?;
        st.serialize_field("s", &self.s)?;
        st.serialize_field("m", self.m.entries())?;
        st.serialize_field("k", &self.k)?;
        st.serialize_field("obstructive", &self.obstructive)?;
        st.serialize_field("residual", &self.residual)?;
        st.end()
    }
}

/// Exhaustive resonance scan of one eigenvalue tuple up to a degree cap.
#[derive(Debug, Clone, Serialize)]
pub struct ResonanceReport {
    #[serde(serialize_with = "ser_eigenvalues")]
    pub eigenvalues: Vec<Complex64>,
    pub max_degree: u32,
    pub tol: f64,
    pub witnesses: Vec<ResonanceWitness>,
}

fn ser_eigenvalues<S: Serializer>(v: &[Complex64], ser: S) -> std::result::Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct C {
        re: f64,
        im: f64,
    }
    ser.collect_seq(v.iter().map(|z| C { re: z.re, im: z.im }))
}

impl ResonanceReport {
    pub fn has_obstructive(&self) -> bool {
        self.witnesses.iter().any(|w| w.obstructive)
    }
}

fn lambda_pow_m(lambda: &[Complex64], m: &Exponent) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    for (j, &e) in m.entries().iter().enumerate() {
        if e > 0 {
            acc *= lambda[j].powu(e);
        }
    }
    acc
}

fn log_sum_m(lambda: &[Complex64], m: &Exponent) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, &e) in m.entries().iter().enumerate() {
        if e > 0 {
            acc += (e as f64) * lambda[j].ln();
        }
    }
    acc
}

/// Classify the resonance (s, m): recover the branch integer k from
/// δ = Log λ_s − Σ m_j Log λ_j and require |δ − 2πik| ≤ tol.
///
/// `s` is 1-based, matching reports.
pub fn classify_witness(
    lambda: &[Complex64],
    s: usize,
    m: &Exponent,
    tol: f64,
) -> Result<ResonanceWitness> {
    if s == 0 || s > lambda.len() {
        return Err(Error::IndexOutOfRange {
            index: s,
            n: lambda.len(),
        });
    }
    if m.len() != lambda.len() {
        return Err(Error::DimensionMismatch {
            left: m.len(),
            right: lambda.len(),
        });
    }
    if m.degree() < 2 {
        return Err(Error::invalid("resonance multi-index needs degree >= 2"));
    }
    let delta = lambda[s - 1].ln() - log_sum_m(lambda, m);
    // Principal logs have imaginary parts in (-pi, pi], so Re delta measures
    // a modulus mismatch and only Im delta can hide a 2-pi multiple.
    let k = (delta.im / TAU).round() as i64;
    let residual = (delta - Complex64::new(0.0, TAU * k as f64)).norm();
    if residual > tol {
        return Err(Error::InconsistentWitness {
            s,
            m: m.entries().to_vec(),
            residual,
            tol,
        });
    }
    Ok(ResonanceWitness {
        s,
        m: m.clone(),
        k,
        obstructive: k != 0,
        residual,
    })
}

/// Scan all (s, m) with 2 ≤ |m| ≤ max_degree for |λ_s − λ^m| ≤ tol·|λ_s|.
///
/// Witness order is fixed: degree, then graded-lex on m, then s.
pub fn find_resonances(lambda: &[Complex64], max_degree: u32, tol: f64) -> Result<ResonanceReport> {
    if lambda.is_empty() {
        return Err(Error::invalid("empty eigenvalue list"));
    }
    if max_degree < 2 {
        return Err(Error::invalid("max_degree must be at least 2"));
    }
    for l in lambda {
        if l.norm() <= tol {
            return Err(Error::ZeroEigenvalue);
        }
    }
    let n = lambda.len();
    let mut witnesses = Vec::new();
    for d in 2..=max_degree {
        for m in Exponent::enumerate_degree(n, d) {
            let lm = lambda_pow_m(lambda, &m);
            for s in 0..n {
                if (lambda[s] - lm).norm() <= tol * lambda[s].norm() {
                    let w = classify_witness(lambda, s + 1, &m, classify_tol(tol))?;
                    witnesses.push(w);
                }
            }
        }
    }
    Ok(ResonanceReport {
        eigenvalues: lambda.to_vec(),
        max_degree,
        tol,
        witnesses,
    })
}

/// Detection compares |λ_s − λ^m| multiplicatively; classification measures
/// the same coincidence through logarithms, which divides the error by
/// |λ_s| but also picks up |m| rounding terms. A modest factor keeps a
/// detected witness from failing its own classification at the boundary.
fn classify_tol(tol: f64) -> f64 {
    tol * 16.0
}

/// Independent cross-check of `classify_witness`: sample λ_s^t vs λ^{tm}
/// (principal powers) over a grid of real t. Returns true iff some sample
/// separates them by more than tol, i.e. the resonance is obstructive.
pub fn check_obstructive_by_sampling(
    lambda: &[Complex64],
    s: usize,
    m: &Exponent,
    t_grid: &[f64],
    tol: f64,
) -> Result<bool> {
    if s == 0 || s > lambda.len() {
        return Err(Error::IndexOutOfRange {
            index: s,
            n: lambda.len(),
        });
    }
    let log_s = lambda[s - 1].ln();
    let log_m = log_sum_m(lambda, m);
    for &t in t_grid {
        let a = (log_s * t).exp();
        let b = (log_m * t).exp();
        if (a - b).norm() > tol {
            return Ok(true);
        }
    }
    Ok(false)
}

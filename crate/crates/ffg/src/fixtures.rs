//! The model maps everything else is tested against, plus seeded
//! generators for the property suites.
//!
//! Two families carry the negative results. The one-variable rotation
//! with a degree-7 jet has neither a square root nor a logarithm: its
//! linear coefficient is a primitive 6th root of unity, so the degree-7
//! divisor vanishes against a unit residual. The plane family couples a
//! 2pi/m rotation with a degree-(m+1) shear; it is area preserving, yet
//! every real square root candidate dies at degree m+1.
//!
//! The generators produce triangular-positive maps (which always have
//! logarithms) and volume-preserving maps (shear compositions), both
//! deterministic from their seed.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::series::{Exponent, Series};
use crate::transform::Transformation;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// The rotation-plus-jet map e^{i pi/3} z + z^7.
pub fn example1(order: u32) -> Result<Transformation> {
    if order < 7 {
        return Err(Error::invalid(format!(
            "the degree-7 jet needs order >= 7, got {order}"
        )));
    }
    let lam = Complex64::from_polar(1.0, std::f64::consts::PI / 3.0);
    let comp = Series::from_terms(
        1,
        order,
        [(Exponent::new(vec![1]), lam), (Exponent::new(vec![7]), ONE)],
    )?;
    Transformation::new(vec![comp])
}

/// Rotation by 2pi/m composed with the shear (x1 + x2^{m+1}, x2): a real,
/// area-preserving plane map with no real square root.
#[derive(Debug, Clone)]
pub struct Example2Family {
    pub m: u32,
    pub alpha: f64,
    pub rotation: CMatrix,
    pub shear: Transformation,
    pub u: Transformation,
}

// cos(pi) and sin(pi/2) come out exact in f64 but their partners do not;
// rounding them to honest zeros keeps the m = 2, 4 fixtures exact.
fn snap(x: f64) -> f64 {
    if x.abs() < 2e-16 {
        0.0
    } else {
        x
    }
}

pub fn example2(m: u32, order: u32) -> Result<Example2Family> {
    if m < 2 || !m.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "the family needs an even m >= 2, got {m}"
        )));
    }
    if order < m + 1 {
        return Err(Error::invalid(format!(
            "the degree-{} shear needs order >= {}, got {order}",
            m + 1,
            m + 1
        )));
    }
    let alpha = std::f64::consts::TAU / m as f64;
    let (cos_a, sin_a) = (snap(alpha.cos()), snap(alpha.sin()));
    let rotation = CMatrix::from_real_rows(&[vec![cos_a, -sin_a], vec![sin_a, cos_a]]);
    let shear = Transformation::new(vec![
        Series::from_terms(
            2,
            order,
            [
                (Exponent::new(vec![1, 0]), ONE),
                (Exponent::new(vec![0, m + 1]), ONE),
            ],
        )?,
        Series::from_terms(2, order, [(Exponent::new(vec![0, 1]), ONE)])?,
    ])?;
    let u = Transformation::from_linear(&rotation, order)?.compose(&shear)?;
    Ok(Example2Family {
        m,
        alpha,
        rotation,
        shear,
        u,
    })
}

fn dense_tail(rng: &mut ChaCha8Rng, n: usize, order: u32, span: f64) -> Vec<(Exponent, Complex64)> {
    let mut terms = Vec::new();
    for d in 2..=order {
        for e in Exponent::enumerate_degree(n, d) {
            terms.push((e, Complex64::new(rng.gen_range(-span..=span), 0.0)));
        }
    }
    terms
}

fn build_bl(n: usize, order: u32, seed: u64, repeat: bool) -> Transformation {
    assert!((1..=4).contains(&n), "generator is sized for n <= 4");
    assert!(
        (1..=10).contains(&order),
        "generator is sized for order <= 10"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // diagonal in [1/2, 2], entries pairwise separated
    let mut diag: Vec<f64> = Vec::with_capacity(n);
    while diag.len() < n {
        let d = rng.gen_range(0.5..=2.0);
        if diag.iter().all(|&p| (p - d).abs() >= 0.05) {
            diag.push(d);
        }
    }
    if repeat && n >= 2 {
        let j = rng.gen_range(1..n);
        diag[j] = diag[0];
    }
    let mut components = Vec::with_capacity(n);
    for i in 0..n {
        let mut terms = vec![(Exponent::unit(n, i), Complex64::new(diag[i], 0.0))];
        for j in 0..i {
            terms.push((
                Exponent::unit(n, j),
                Complex64::new(rng.gen_range(-1.0..=1.0), 0.0),
            ));
        }
        terms.extend(dense_tail(&mut rng, n, order, 1.0));
        components.push(Series::from_terms(n, order, terms).expect("well-formed terms"));
    }
    Transformation::new(components).expect("triangular-positive is invertible")
}

/// Deterministic triangular-positive map: lower-triangular linear part
/// with diagonal in [1/2, 2] (entries separated by 0.05) and a dense
/// random tail. These always possess logarithms.
pub fn random_bl(n: usize, order: u32, seed: u64) -> Transformation {
    build_bl(n, order, seed, false)
}

/// Same generator, but two diagonal entries are forced equal so the
/// triangular (non-diagonalizable) logarithm path gets exercised.
pub fn random_bl_repeated(n: usize, order: u32, seed: u64) -> Transformation {
    build_bl(n, order, seed, true)
}

/// Deterministic volume-preserving map: a product of unit-triangular
/// linear factors, a determinant-1 diagonal, and polynomial shears (each
/// adds a series in the other variables to one component, so each factor
/// has jacobian determinant exactly 1).
pub fn random_ss(n: usize, order: u32, seed: u64) -> Transformation {
    assert!(
        (2..=4).contains(&n),
        "volume-preserving generator needs 2 <= n <= 4"
    );
    assert!(
        (1..=10).contains(&order),
        "generator is sized for order <= 10"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // unit lower x unit upper x diag with product 1
    let mut lin = CMatrix::identity(n);
    for i in 0..n {
        for j in 0..i {
            lin[(i, j)] = Complex64::new(rng.gen_range(-1.0..=1.0), 0.0);
        }
    }
    let mut upper = CMatrix::identity(n);
    for i in 0..n {
        for j in (i + 1)..n {
            upper[(i, j)] = Complex64::new(rng.gen_range(-1.0..=1.0), 0.0);
        }
    }
    let mut prod = 1.0;
    let mut scales = Vec::with_capacity(n);
    for _ in 0..n - 1 {
        let d: f64 = rng.gen_range(0.5..=2.0);
        prod *= d;
        scales.push(d);
    }
    scales.push(1.0 / prod);
    let diag: Vec<Complex64> = scales.into_iter().map(|d| Complex64::new(d, 0.0)).collect();
    let linear = lin.mul(&upper).mul(&CMatrix::diag(&diag));
    let mut u = Transformation::from_linear(&linear, order).expect("det-1 linear part");
    for _ in 0..3 {
        let axis = rng.gen_range(0..n);
        let mut components = Vec::with_capacity(n);
        for i in 0..n {
            let mut terms = vec![(Exponent::unit(n, i), ONE)];
            if i == axis {
                // a polynomial in the other variables only
                for d in 2..=order {
                    for e in Exponent::enumerate_degree(n, d) {
                        if e.get(axis) == 0 {
                            terms.push((e, Complex64::new(rng.gen_range(-0.3..=0.3), 0.0)));
                        }
                    }
                }
            }
            components.push(Series::from_terms(n, order, terms).expect("well-formed terms"));
        }
        let shear = Transformation::new(components).expect("unit jacobian shear");
        u = shear.compose(&u).expect("matching shapes");
    }
    u
}

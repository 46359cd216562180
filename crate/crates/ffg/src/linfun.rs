//! Matrix functions of the linear part: eigendecomposition, principal
//! logarithm, k-th roots with explicit branch selection, real powers.
//!
//! All of these work through an eigenbasis, with one exception: a
//! triangular matrix with positive real diagonal gets its logarithm from
//! repeated triangular square roots instead. That path needs no eigenbasis
//! at all, so it also covers repeated and even defective eigenvalues, and
//! it keeps the output exactly triangular (and exactly real for real
//! input).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::series::Tolerance;

/// Largest supported matrix dimension for spectral operations.
pub const MAX_DIM: usize = 6;

/// Eigenvector matrix condition beyond which a matrix is treated as
/// having no usable eigenbasis.
const CONDITION_LIMIT: f64 = 1e8;

/// Relative eigenvalue clustering width.
const CLUSTER_TOL: f64 = 1e-7;

/// Relative snapping width for conjugate pairing of real-matrix spectra.
const CONJ_SNAP_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Eigensystem {
    /// Eigenvalues; for a triangular input in diagonal order, otherwise
    /// sorted by real part ascending, imaginary part descending (so a
    /// conjugate pair appears with the upper-half-plane member first).
    pub values: Vec<Complex64>,
    /// Right eigenvectors, one unit column per eigenvalue.
    pub vectors: CMatrix,
    /// Frobenius condition number of the eigenvector matrix.
    pub condition: f64,
}

/// Per-eigenvalue k-th-root branch selection: entry j picks the branch
/// e^{2*pi*i*b_j/k} relative to the principal root of eigenvalue j.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchChoice {
    indices: Vec<usize>,
}

impl BranchChoice {
    pub fn new(indices: Vec<usize>) -> Self {
        BranchChoice { indices }
    }

    /// Branch 0 for every eigenvalue: the principal root.
    pub fn principal(n: usize) -> Self {
        BranchChoice {
            indices: vec![0; n],
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn is_principal(&self) -> bool {
        self.indices.iter().all(|&b| b == 0)
    }

    /// All k^n branch choices, in odometer order (last index fastest).
    pub fn enumerate_all(n: usize, k: u32) -> Vec<BranchChoice> {
        let k = k as usize;
        let total = k.pow(n as u32);
        let mut out = Vec::with_capacity(total);
        for code in 0..total {
            let mut rest = code;
            let mut idx = vec![0usize; n];
            for j in (0..n).rev() {
                idx[j] = rest % k;
                rest /= k;
            }
            out.push(BranchChoice { indices: idx });
        }
        out
    }

    fn validate(&self, k: u32, n: usize) -> Result<()> {
        if self.indices.len() != n || self.indices.iter().any(|&b| b >= k as usize) {
            return Err(Error::BadBranch {
                given: self.indices.clone(),
                k,
                n,
            });
        }
        Ok(())
    }
}

fn check_dim(u: &CMatrix) -> Result<usize> {
    assert!(u.is_square(), "linear part must be square");
    let n = u.rows();
    if n > MAX_DIM {
        return Err(Error::DimensionTooLarge { n, max: MAX_DIM });
    }
    Ok(n)
}

/// Union-find clustering of nearly equal eigenvalues.
fn cluster_values(values: &[Complex64], width: f64) -> Vec<Vec<usize>> {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        let mut c = i;
        while parent[c] != c {
            let next = parent[c];
            parent[c] = r;
            c = next;
        }
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (values[i] - values[j]).norm() <= width {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj] = ri;
                }
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut root_slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_slot[r] == usize::MAX {
            root_slot[r] = clusters.len();
            clusters.push(Vec::new());
        }
        clusters[root_slot[r]].push(i);
    }
    clusters
}

/// For a real matrix the spectrum is conjugate-symmetric; snap the computed
/// values onto that symmetry so downstream branch logic can rely on it.
fn snap_conjugate_pairs(values: &mut [Complex64], scale: f64) {
    let snap = CONJ_SNAP_TOL * (1.0 + scale);
    for v in values.iter_mut() {
        if v.im.abs() <= snap {
            *v = Complex64::new(v.re, 0.0);
        }
    }
    let n = values.len();
    let mut used = vec![false; n];
    for i in 0..n {
        if values[i].im <= 0.0 || used[i] {
            continue;
        }
        let target = values[i].conj();
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if j == i || used[j] || values[j].im >= 0.0 {
                continue;
            }
            let d = (values[j] - target).norm();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, d)) = best {
            if d <= snap {
                values[j] = target;
                used[i] = true;
                used[j] = true;
            }
        }
    }
}

/// Eigendecomposition of a square matrix, n <= 6.
///
/// Eigenvectors come from the null space of U - lambda*I, one cluster of
/// nearly equal eigenvalues at a time, so multiplicities are honest: a
/// cluster whose eigenspace is too small means the matrix is defective and
/// is reported as such rather than approximated.
pub fn eigen(u: &CMatrix) -> Result<Eigensystem> {
    let n = check_dim(u)?;
    if n == 0 {
        return Ok(Eigensystem {
            values: Vec::new(),
            vectors: CMatrix::zeros(0, 0),
            condition: 1.0,
        });
    }
    let scale = u.max_abs();
    let struct_tol = 1e-12 * (1.0 + scale);
    let triangular = u.is_lower_triangular(struct_tol) || u.is_upper_triangular(struct_tol);
    let is_real = u.max_imag() <= struct_tol;

    let mut values = if triangular {
        u.diagonal()
    } else {
        linalg::eigenvalues(u)?
    };
    if is_real {
        snap_conjugate_pairs(&mut values, scale);
    }
    if !triangular {
        values.sort_by(|a, b| {
            a.re.partial_cmp(&b.re)
                .unwrap()
                .then(b.im.partial_cmp(&a.im).unwrap())
        });
    }

    let width = CLUSTER_TOL * (1.0 + scale);
    let clusters = cluster_values(&values, width);
    let mut vectors = CMatrix::zeros(n, n);
    for members in &clusters {
        let mut rep = Complex64::default();
        for &i in members {
            rep += values[i];
        }
        rep /= members.len() as f64;
        let shifted = u.sub(&CMatrix::identity(n).scale(rep));
        let basis = linalg::null_space(&shifted, CLUSTER_TOL);
        if basis.len() < members.len() {
            return Err(Error::DefectiveLinearPart {
                condition: f64::INFINITY,
            });
        }
        for (slot, &i) in members.iter().enumerate() {
            vectors.set_col(i, &basis[slot]);
        }
    }

    let inv = linalg::invert(&vectors, 1e-14).map_err(|_| Error::DefectiveLinearPart {
        condition: f64::INFINITY,
    })?;
    let condition = vectors.norm_fro() * inv.norm_fro();
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(Error::DefectiveLinearPart { condition });
    }
    Ok(Eigensystem {
        values,
        vectors,
        condition,
    })
}

fn check_invertible(u: &CMatrix, tol: &Tolerance) -> Result<()> {
    let lu = linalg::lu_decompose(u);
    if lu.min_pivot <= tol.zero_tol * (1.0 + u.max_abs()) {
        return Err(Error::NotInvertible {
            det_abs: lu.det().norm(),
        });
    }
    Ok(())
}

fn triangular_positive_shape(u: &CMatrix, tol: &Tolerance) -> Option<bool> {
    // Some(true): lower triangular with positive real diagonal;
    // Some(false): upper. None: neither.
    let cut = tol.zero_tol * (1.0 + u.max_abs());
    let diag_ok = u
        .diagonal()
        .iter()
        .all(|d| d.re > tol.zero_tol && d.im.abs() <= tol.zero_tol * (1.0 + d.norm()));
    if !diag_ok {
        return None;
    }
    if u.is_lower_triangular(cut) {
        Some(true)
    } else if u.is_upper_triangular(cut) {
        Some(false)
    } else {
        None
    }
}

fn project_triangular(u: &CMatrix, lower: bool) -> CMatrix {
    let n = u.rows();
    let mut t = u.clone();
    for i in 0..n {
        let d = t[(i, i)];
        t[(i, i)] = Complex64::new(d.re, 0.0);
        for j in (i + 1)..n {
            if lower {
                t[(i, j)] = linalg::ZERO;
            } else {
                t[(j, i)] = linalg::ZERO;
            }
        }
    }
    t
}

/// Principal matrix logarithm.
///
/// Triangular matrices with positive real diagonal are handled by inverse
/// scaling and squaring (exactly triangular output, exactly real for real
/// input, repeated eigenvalues welcome). Everything else goes through the
/// eigenbasis and requires the spectrum to stay off the closed negative
/// real axis.
pub fn mat_log(u: &CMatrix, tol: &Tolerance) -> Result<CMatrix> {
    check_dim(u)?;
    check_invertible(u, tol)?;
    if let Some(lower) = triangular_positive_shape(u, tol) {
        let was_real = u.max_imag() == 0.0;
        let t = project_triangular(u, lower);
        let log = if lower {
            linalg::log_triangular_lower(&t)
        } else {
            linalg::log_triangular_lower(&t.transpose()).transpose()
        };
        return Ok(if was_real { log.drop_imag() } else { log });
    }
    let es = eigen(u)?;
    for l in &es.values {
        if l.re <= 0.0 && l.im.abs() <= tol.zero_tol * (1.0 + l.norm()) {
            return Err(Error::BranchCut { re: l.re, im: l.im });
        }
    }
    let logs: Vec<Complex64> = es.values.iter().map(|l| l.ln()).collect();
    let inv = linalg::invert(&es.vectors, 1e-14).map_err(|_| Error::DefectiveLinearPart {
        condition: es.condition,
    })?;
    let b = es.vectors.mul(&CMatrix::diag(&logs)).mul(&inv);
    if u.max_imag() <= tol.zero_tol * (1.0 + u.max_abs()) {
        // conjugate-symmetric spectrum: the logarithm is real up to rounding
        Ok(b.drop_imag())
    } else {
        Ok(b)
    }
}

/// K-th root of the linear part in its eigenbasis, with an explicit branch
/// per eigenvalue: a_j = |lambda_j|^{1/k} e^{i(Arg lambda_j + 2 pi b_j)/k}.
pub fn mat_root(u: &CMatrix, k: u32, branch: &BranchChoice, tol: &Tolerance) -> Result<CMatrix> {
    let n = check_dim(u)?;
    if k == 0 {
        return Err(Error::invalid("root index k must be positive"));
    }
    branch.validate(k, n)?;
    check_invertible(u, tol)?;
    let es = eigen(u)?;
    let roots: Vec<Complex64> = es
        .values
        .iter()
        .zip(branch.indices())
        .map(|(l, &b)| {
            let r = l.norm().powf(1.0 / k as f64);
            let theta = (l.arg() + std::f64::consts::TAU * b as f64) / k as f64;
            Complex64::from_polar(r, theta)
        })
        .collect();
    let inv = linalg::invert(&es.vectors, 1e-14).map_err(|_| Error::DefectiveLinearPart {
        condition: es.condition,
    })?;
    Ok(es.vectors.mul(&CMatrix::diag(&roots)).mul(&inv))
}

/// Real power U^t = e^{t ln U} on the principal branch.
pub fn mat_power(u: &CMatrix, t: f64, tol: &Tolerance) -> Result<CMatrix> {
    let b = mat_log(u, tol)?;
    let p = mat_exp(&b.scale(Complex64::new(t, 0.0)));
    if u.max_imag() == 0.0 && b.max_imag() == 0.0 {
        Ok(p.drop_imag())
    } else {
        Ok(p)
    }
}

/// Matrix exponential (scaling and squaring; any square matrix).
pub fn mat_exp(b: &CMatrix) -> CMatrix {
    linalg::mat_exp(b)
}

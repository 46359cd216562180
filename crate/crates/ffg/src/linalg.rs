//! Dense complex linear algebra at desk scale.
//!
//! Everything in here is sized for the matrices this crate actually builds:
//! linear parts up to 6x6 and per-degree solver operators up to a few
//! hundred rows. Plain O(n^3) algorithms with pivoting throughout; no
//! external solver.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut m = CMatrix::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Self {
        CMatrix::from_rows(
            &rows
                .iter()
                .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
                .collect::<Vec<_>>(),
        )
    }

    pub fn diag(entries: &[Complex64]) -> Self {
        let mut m = CMatrix::zeros(entries.len(), entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)])
            .collect()
    }

    pub fn col(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[Complex64]) {
        assert_eq!(v.len(), self.rows);
        for i in 0..self.rows {
            self[(i, j)] = v[i];
        }
    }

    pub fn transpose(&self) -> CMatrix {
        let mut t = CMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    pub fn scale(&self, c: Complex64) -> CMatrix {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= c;
        }
        out
    }

    pub fn mul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows, "inner dimensions");
        let mut out = CMatrix::zeros(self.rows, other.cols);
        // ikj loop order keeps the inner stride 1
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                let src = k * other.cols;
                let dst = i * other.cols;
                for j in 0..other.cols {
                    out.data[dst + j] += a * other.data[src + j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len());
        let mut out = vec![ZERO; self.rows];
        for i in 0..self.rows {
            let mut acc = ZERO;
            let base = i * self.cols;
            for j in 0..self.cols {
                acc += self.data[base + j] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Max row sum of magnitudes (induced infinity norm).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_imag(&self) -> f64 {
        self.data.iter().map(|c| c.im.abs()).fold(0.0, f64::max)
    }

    pub fn drop_imag(&self) -> CMatrix {
        let mut out = self.clone();
        for c in out.data.iter_mut() {
            *c = Complex64::new(c.re, 0.0);
        }
        out
    }

    pub fn is_lower_triangular(&self, tol: f64) -> bool {
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if self[(i, j)].norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_upper_triangular(&self, tol: f64) -> bool {
        for i in 0..self.rows {
            for j in 0..i.min(self.cols) {
                if self[(i, j)].norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Kronecker product self (x) other.
    pub fn kron(&self, other: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.rows * other.rows, self.cols * other.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self[(i, j)];
                if a == ZERO {
                    continue;
                }
                for p in 0..other.rows {
                    for q in 0..other.cols {
                        out[(i * other.rows + p, j * other.cols + q)] = a * other[(p, q)];
                    }
                }
            }
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial pivoting.
pub(crate) struct Lu {
    lu: CMatrix,
    perm: Vec<usize>,
    swaps: usize,
    pub min_pivot: f64,
}

pub(crate) fn lu_decompose(a: &CMatrix) -> Lu {
    assert!(a.is_square());
    let n = a.rows();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut swaps = 0;
    let mut min_pivot = f64::INFINITY;
    for k in 0..n {
        let mut p = k;
        let mut best = lu[(k, k)].norm();
        for i in (k + 1)..n {
            let v = lu[(i, k)].norm();
            if v > best {
                best = v;
                p = i;
            }
        }
        if p != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = tmp;
            }
            perm.swap(k, p);
            swaps += 1;
        }
        min_pivot = min_pivot.min(best);
        if best == 0.0 {
            continue;
        }
        let piv = lu[(k, k)];
        for i in (k + 1)..n {
            let f = lu[(i, k)] / piv;
            lu[(i, k)] = f;
            for j in (k + 1)..n {
                let sub = f * lu[(k, j)];
                lu[(i, j)] -= sub;
            }
        }
    }
    if n == 0 {
        min_pivot = 0.0;
    }
    Lu {
        lu,
        perm,
        swaps,
        min_pivot,
    }
}

impl Lu {
    pub fn det(&self) -> Complex64 {
        let n = self.lu.rows();
        let mut d = if self.swaps.is_multiple_of(2) {
            ONE
        } else {
            -ONE
        };
        for i in 0..n {
            d *= self.lu[(i, i)];
        }
        d
    }

    pub fn solve_vec(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n);
        let mut y = vec![ZERO; n];
        for i in 0..n {
            let mut acc = b[self.perm[i]];
            for j in 0..i {
                acc -= self.lu[(i, j)] * y[j];
            }
            y[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in (i + 1)..n {
                acc -= self.lu[(i, j)] * y[j];
            }
            y[i] = acc / self.lu[(i, i)];
        }
        y
    }

    pub fn solve_mat(&self, b: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let col = self.solve_vec(&b.col(j));
            out.set_col(j, &col);
        }
        out
    }
}

pub(crate) fn det(a: &CMatrix) -> Complex64 {
    lu_decompose(a).det()
}

pub(crate) fn invert(a: &CMatrix, tol: f64) -> Result<CMatrix> {
    let lu = lu_decompose(a);
    let scale = a.max_abs();
    if lu.min_pivot <= tol * (1.0 + scale) {
        return Err(Error::NotInvertible {
            det_abs: lu.det().norm(),
        });
    }
    Ok(lu.solve_mat(&CMatrix::identity(a.rows())))
}

/// Basis of the null space of `a`, via Gaussian elimination with full
/// pivoting. Entries below `tol * (1 + max_abs)` never become pivots.
pub(crate) fn null_space(a: &CMatrix, tol: f64) -> Vec<Vec<Complex64>> {
    let m = a.rows();
    let n = a.cols();
    let mut r = a.clone();
    let cut = tol * (1.0 + a.max_abs());
    let mut col_perm: Vec<usize> = (0..n).collect();
    let mut rank = 0;
    for k in 0..m.min(n) {
        let mut best = 0.0;
        let mut bi = k;
        let mut bj = k;
        for i in k..m {
            for j in k..n {
                let v = r[(i, j)].norm();
                if v > best {
                    best = v;
                    bi = i;
                    bj = j;
                }
            }
        }
        if best <= cut {
            break;
        }
        if bi != k {
            for j in 0..n {
                let tmp = r[(k, j)];
                r[(k, j)] = r[(bi, j)];
                r[(bi, j)] = tmp;
            }
        }
        if bj != k {
            for i in 0..m {
                let tmp = r[(i, k)];
                r[(i, k)] = r[(i, bj)];
                r[(i, bj)] = tmp;
            }
            col_perm.swap(k, bj);
        }
        let piv = r[(k, k)];
        for i in (k + 1)..m {
            let f = r[(i, k)] / piv;
            for j in k..n {
                let sub = f * r[(k, j)];
                r[(i, j)] -= sub;
            }
        }
        rank += 1;
    }
    // Back substitution: free columns rank..n give one basis vector each.
    let mut basis = Vec::with_capacity(n - rank);
    for free in rank..n {
        let mut xp = vec![ZERO; n];
        xp[free] = ONE;
        for i in (0..rank).rev() {
            let mut acc = -r[(i, free)];
            for j in (i + 1)..rank {
                acc -= r[(i, j)] * xp[j];
            }
            xp[i] = acc / r[(i, i)];
        }
        let mut x = vec![ZERO; n];
        for (pos, &orig) in col_perm.iter().enumerate() {
            x[orig] = xp[pos];
        }
        let nrm = x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for c in x.iter_mut() {
            *c /= nrm;
        }
        basis.push(x);
    }
    basis
}

/// Outcome of a rank-revealing least-squares solve.
pub(crate) struct MinNorm {
    pub solution: Vec<Complex64>,
    pub rank: usize,
    /// Norm of the unreachable part of the right-hand side.
    pub residual: f64,
}

fn householder_vector(x: &[Complex64]) -> (Vec<Complex64>, Complex64) {
    // Reflector H = I - 2 v v^H / |v|^2 with H x = alpha e1, |alpha| = |x|,
    // alpha phased opposite x[0] so v = x - alpha e1 has no cancellation.
    let norm = x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let phase = if x[0] == ZERO {
        ONE
    } else {
        x[0] / x[0].norm()
    };
    let alpha = -phase * norm;
    let mut v = x.to_vec();
    v[0] -= alpha;
    (v, alpha)
}

fn apply_householder_left(v: &[Complex64], col: &mut [Complex64]) {
    debug_assert_eq!(v.len(), col.len());
    let vnorm2: f64 = v.iter().map(|c| c.norm_sqr()).sum();
    if vnorm2 == 0.0 {
        return;
    }
    let mut dot = ZERO;
    for (vi, ci) in v.iter().zip(col.iter()) {
        dot += vi.conj() * ci;
    }
    let f = dot * (2.0 / vnorm2);
    for (vi, ci) in v.iter().zip(col.iter_mut()) {
        *ci -= f * vi;
    }
}

/// Minimal-norm least-squares solution of `a x = b` via column-pivoted
/// Householder QR and a second factorization of the leading rows
/// (complete orthogonal decomposition). Rank counts pivot columns whose
/// remaining norm exceeds the absolute cut `rank_cut`; an operator that is
/// tiny across the board gets rank 0, which is what a vanishing stage
/// divisor must look like to the callers.
pub(crate) fn min_norm_solve(a: &CMatrix, b: &[Complex64], rank_cut: f64) -> MinNorm {
    let m = a.rows();
    let n = a.cols();
    assert_eq!(b.len(), m);
    let mut r = a.clone();
    let mut c = b.to_vec();
    let mut piv: Vec<usize> = (0..n).collect();
    let mut reflectors: Vec<Vec<Complex64>> = Vec::new();
    let kmax = m.min(n);
    let mut rank = 0;
    for k in 0..kmax {
        // exact column norms below the processed rows; n is small
        let mut best = -1.0;
        let mut bj = k;
        for j in k..n {
            let nrm: f64 = (k..m).map(|i| r[(i, j)].norm_sqr()).sum();
            if nrm > best {
                best = nrm;
                bj = j;
            }
        }
        let best = best.max(0.0).sqrt();
        if best <= rank_cut || best == 0.0 {
            break;
        }
        if bj != k {
            for i in 0..m {
                let tmp = r[(i, k)];
                r[(i, k)] = r[(i, bj)];
                r[(i, bj)] = tmp;
            }
            piv.swap(k, bj);
        }
        let x: Vec<Complex64> = (k..m).map(|i| r[(i, k)]).collect();
        let (v, alpha) = householder_vector(&x);
        for j in k..n {
            let mut col: Vec<Complex64> = (k..m).map(|i| r[(i, j)]).collect();
            apply_householder_left(&v, &mut col);
            for (off, val) in col.into_iter().enumerate() {
                r[(k + off, j)] = val;
            }
        }
        r[(k, k)] = alpha;
        for i in (k + 1)..m {
            r[(i, k)] = ZERO;
        }
        let mut tail: Vec<Complex64> = (k..m).map(|i| c[i]).collect();
        apply_householder_left(&v, &mut tail);
        for (off, val) in tail.into_iter().enumerate() {
            c[k + off] = val;
        }
        reflectors.push(v);
        rank += 1;
    }

    let residual = c[rank..m].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();

    if rank == 0 {
        return MinNorm {
            solution: vec![ZERO; n],
            rank,
            residual,
        };
    }

    // Min-norm solution of the rank x n system [R11 R12] y = c1: factor
    // its adjoint Z = Q2 T, solve T^H w = c1, y = Q2 w.
    let mut z = CMatrix::zeros(n, rank);
    for i in 0..rank {
        for j in 0..n {
            z[(j, i)] = r[(i, j)].conj();
        }
    }
    let mut z_reflectors: Vec<Vec<Complex64>> = Vec::new();
    let mut t = z.clone();
    for k in 0..rank {
        let x: Vec<Complex64> = (k..n).map(|i| t[(i, k)]).collect();
        let (v, alpha) = householder_vector(&x);
        for j in k..rank {
            let mut col: Vec<Complex64> = (k..n).map(|i| t[(i, j)]).collect();
            apply_householder_left(&v, &mut col);
            for (off, val) in col.into_iter().enumerate() {
                t[(k + off, j)] = val;
            }
        }
        t[(k, k)] = alpha;
        for i in (k + 1)..n {
            t[(i, k)] = ZERO;
        }
        z_reflectors.push(v);
    }
    // forward substitution on T^H (lower triangular)
    let mut w = vec![ZERO; rank];
    for i in 0..rank {
        let mut acc = c[i];
        for j in 0..i {
            acc -= t[(j, i)].conj() * w[j];
        }
        w[i] = acc / t[(i, i)].conj();
    }
    // y = Q2 w: embed and apply reflectors in reverse
    let mut y = vec![ZERO; n];
    y[..rank].copy_from_slice(&w);
    for k in (0..rank).rev() {
        let v = &z_reflectors[k];
        let mut seg: Vec<Complex64> = (k..n).map(|i| y[i]).collect();
        apply_householder_left(v, &mut seg);
        for (off, val) in seg.into_iter().enumerate() {
            y[k + off] = val;
        }
    }
    let mut solution = vec![ZERO; n];
    for (pos, &orig) in piv.iter().enumerate() {
        solution[orig] = y[pos];
    }
    MinNorm {
        solution,
        rank,
        residual,
    }
}

// ---------------------------------------------------------------------------
// Eigenvalues

fn roots_quadratic(tr: Complex64, dt: Complex64) -> (Complex64, Complex64) {
    // lambda^2 - tr lambda + dt = 0, with the sqrt sign chosen to avoid
    // cancellation in tr + s.
    let disc = (tr * tr - 4.0 * dt).sqrt();
    let s = if (tr + disc).norm() >= (tr - disc).norm() {
        disc
    } else {
        -disc
    };
    let big = (tr + s) / 2.0;
    if big == ZERO {
        (ZERO, ZERO)
    } else {
        (big, dt / big)
    }
}

fn eig2(a: &CMatrix) -> Vec<Complex64> {
    let tr = a[(0, 0)] + a[(1, 1)];
    let dt = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    let (l1, l2) = roots_quadratic(tr, dt);
    vec![l1, l2]
}

fn eig3(a: &CMatrix) -> Vec<Complex64> {
    // characteristic polynomial l^3 - c2 l^2 + c1 l - c0
    let c2 = a[(0, 0)] + a[(1, 1)] + a[(2, 2)];
    let minor =
        |i: usize, j: usize, k: usize, l: usize| a[(i, i)] * a[(j, j)] - a[(k, l)] * a[(l, k)];
    let c1 = minor(0, 1, 0, 1) + minor(0, 2, 0, 2) + minor(1, 2, 1, 2);
    let c0 = det(a);
    // depressed cubic t^3 + p t + q, l = t + c2/3
    let shift = c2 / 3.0;
    let p = c1 - c2 * c2 / 3.0;
    let q = -c0 + c1 * shift - 2.0 * shift * shift * shift;
    // q here is the value of the depressed polynomial offset: t^3 + p t + q
    let half_q = q / 2.0;
    let disc = (half_q * half_q + p * p * p / 27.0).sqrt();
    let u3 = if (-half_q + disc).norm() >= (-half_q - disc).norm() {
        -half_q + disc
    } else {
        -half_q - disc
    };
    let mut roots = if u3 == ZERO {
        // p = q = 0: triple root at the shift
        vec![ZERO, ZERO, ZERO]
    } else {
        let u = u3.powf(1.0 / 3.0);
        let omega = Complex64::new(-0.5, 3.0f64.sqrt() / 2.0);
        let mut out = Vec::with_capacity(3);
        let mut uk = u;
        for _ in 0..3 {
            let t = uk - p / (3.0 * uk);
            out.push(t);
            uk *= omega;
        }
        out
    };
    for t in roots.iter_mut() {
        let mut l = *t + shift;
        // Newton polish on the characteristic polynomial; skip near-multiple
        // roots where the derivative degenerates.
        for _ in 0..3 {
            let f = ((l - c2) * l + c1) * l - c0;
            let df = (3.0 * l - 2.0 * c2) * l + c1;
            if df.norm() < 1e-8 * (1.0 + l.norm_sqr()) {
                break;
            }
            l -= f / df;
        }
        *t = l - shift;
    }
    roots.into_iter().map(|t| t + shift).collect()
}

/// Complex Givens rotation: returns (c, s, r) with c real such that
/// [c s; -conj(s) c] * [a; b] = [r; 0].
fn givens(a: Complex64, b: Complex64) -> (f64, Complex64, Complex64) {
    if a == ZERO {
        return (0.0, ONE, b);
    }
    let na = a.norm();
    let h = (na * na + b.norm_sqr()).sqrt();
    let phase = a / na;
    let c = na / h;
    let s = phase * b.conj() / h;
    (c, s, phase * h)
}

fn hessenberg(a: &CMatrix) -> CMatrix {
    let n = a.rows();
    let mut h = a.clone();
    for k in 0..n.saturating_sub(2) {
        let x: Vec<Complex64> = ((k + 1)..n).map(|i| h[(i, k)]).collect();
        if x.iter().map(|c| c.norm_sqr()).sum::<f64>() == 0.0 {
            continue;
        }
        let (v, _) = householder_vector(&x);
        // rows k+1..n
        for j in 0..n {
            let mut col: Vec<Complex64> = ((k + 1)..n).map(|i| h[(i, j)]).collect();
            apply_householder_left(&v, &mut col);
            for (off, val) in col.into_iter().enumerate() {
                h[(k + 1 + off, j)] = val;
            }
        }
        // columns k+1..n (apply the same reflector from the right; it is
        // Hermitian, so right application conjugates the dot product)
        let vnorm2: f64 = v.iter().map(|c| c.norm_sqr()).sum();
        for i in 0..n {
            let mut dot = ZERO;
            for (off, vv) in v.iter().enumerate() {
                dot += h[(i, k + 1 + off)] * *vv;
            }
            let f = dot * (2.0 / vnorm2);
            for (off, vv) in v.iter().enumerate() {
                let sub = f * vv.conj();
                h[(i, k + 1 + off)] -= sub;
            }
        }
        for i in (k + 2)..n {
            h[(i, k)] = ZERO;
        }
    }
    h
}

fn eig_qr(a: &CMatrix) -> Result<Vec<Complex64>> {
    let n = a.rows();
    let mut h = hessenberg(a);
    let scale = a.max_abs().max(1.0);
    let eps = f64::EPSILON;
    let mut eigs = vec![ZERO; n];
    let mut hi = n; // active block is 0..hi
    let mut iters_total = 0usize;
    let max_total = 40 * n.max(1);
    while hi > 0 {
        if hi == 1 {
            eigs[0] = h[(0, 0)];
            break;
        }
        // deflate tiny subdiagonals
        let mut deflated = false;
        for l in (1..hi).rev() {
            let small = eps * (h[(l - 1, l - 1)].norm() + h[(l, l)].norm() + scale);
            if h[(l, l - 1)].norm() <= small {
                h[(l, l - 1)] = ZERO;
                if l == hi - 1 {
                    eigs[hi - 1] = h[(hi - 1, hi - 1)];
                    hi -= 1;
                    deflated = true;
                    break;
                }
            }
        }
        if deflated {
            continue;
        }
        if hi == 2 {
            let block =
                CMatrix::from_rows(&[vec![h[(0, 0)], h[(0, 1)]], vec![h[(1, 0)], h[(1, 1)]]]);
            let r = eig2(&block);
            eigs[0] = r[0];
            eigs[1] = r[1];
            break;
        }
        iters_total += 1;
        if iters_total > max_total {
            return Err(Error::EigenNoConvergence);
        }
        // Wilkinson shift: eigenvalue of the trailing 2x2 nearest h[hi-1,hi-1]
        let t2 = CMatrix::from_rows(&[
            vec![h[(hi - 2, hi - 2)], h[(hi - 2, hi - 1)]],
            vec![h[(hi - 1, hi - 2)], h[(hi - 1, hi - 1)]],
        ]);
        let r = eig2(&t2);
        let corner = h[(hi - 1, hi - 1)];
        let mut sigma = if (r[0] - corner).norm() <= (r[1] - corner).norm() {
            r[0]
        } else {
            r[1]
        };
        if iters_total.is_multiple_of(12) {
            // exceptional shift to break rare cycling
            sigma = corner + Complex64::new(h[(hi - 1, hi - 2)].norm(), 0.0);
        }
        for d in 0..hi {
            h[(d, d)] -= sigma;
        }
        // QR step by Givens rotations on the Hessenberg band
        let mut rot: Vec<(f64, Complex64)> = Vec::with_capacity(hi - 1);
        for k in 0..(hi - 1) {
            let (c, s, r) = givens(h[(k, k)], h[(k + 1, k)]);
            h[(k, k)] = r;
            h[(k + 1, k)] = ZERO;
            for j in (k + 1)..hi {
                let x = h[(k, j)];
                let y = h[(k + 1, j)];
                h[(k, j)] = c * x + s * y;
                h[(k + 1, j)] = -s.conj() * x + c * y;
            }
            rot.push((c, s));
        }
        for (k, (c, s)) in rot.iter().enumerate() {
            let top = (k + 2).min(hi);
            for i in 0..top {
                let x = h[(i, k)];
                let y = h[(i, k + 1)];
                h[(i, k)] = *c * x + s.conj() * y;
                h[(i, k + 1)] = -*s * x + *c * y;
            }
        }
        for d in 0..hi {
            h[(d, d)] += sigma;
        }
    }
    Ok(eigs)
}

/// Eigenvalues of a square matrix, n <= 6. No ordering promise here;
/// callers sort or pair as they need.
pub(crate) fn eigenvalues(a: &CMatrix) -> Result<Vec<Complex64>> {
    assert!(a.is_square());
    let n = a.rows();
    match n {
        0 => Ok(Vec::new()),
        1 => Ok(vec![a[(0, 0)]]),
        2 => Ok(eig2(a)),
        3 => Ok(eig3(a)),
        _ => eig_qr(a),
    }
}

// ---------------------------------------------------------------------------
// Matrix exponential and friends

const PADE13_THETA: f64 = 5.371920351148152;
const PADE13_B: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Matrix exponential via Pade(13,13) with scaling and squaring.
pub(crate) fn mat_exp(a: &CMatrix) -> CMatrix {
    assert!(a.is_square());
    let n = a.rows();
    if n == 0 {
        return CMatrix::zeros(0, 0);
    }
    let norm = a.norm_inf();
    if norm == 0.0 {
        return CMatrix::identity(n);
    }
    let s = if norm > PADE13_THETA {
        (norm / PADE13_THETA).log2().ceil() as u32
    } else {
        0
    };
    let m = a.scale(Complex64::new(1.0 / (2f64.powi(s as i32)), 0.0));
    let b = &PADE13_B;
    let ident = CMatrix::identity(n);
    let m2 = m.mul(&m);
    let m4 = m2.mul(&m2);
    let m6 = m4.mul(&m2);
    let u_inner = m6
        .scale(b[13].into())
        .add(&m4.scale(b[11].into()))
        .add(&m2.scale(b[9].into()));
    let u_poly = m6
        .mul(&u_inner)
        .add(&m6.scale(b[7].into()))
        .add(&m4.scale(b[5].into()))
        .add(&m2.scale(b[3].into()))
        .add(&ident.scale(b[1].into()));
    let u = m.mul(&u_poly);
    let v_inner = m6
        .scale(b[12].into())
        .add(&m4.scale(b[10].into()))
        .add(&m2.scale(b[8].into()));
    let v = m6
        .mul(&v_inner)
        .add(&m6.scale(b[6].into()))
        .add(&m4.scale(b[4].into()))
        .add(&m2.scale(b[2].into()))
        .add(&ident.scale(b[0].into()));
    let lhs = v.sub(&u);
    let rhs = v.add(&u);
    let lu = lu_decompose(&lhs);
    let mut f = lu.solve_mat(&rhs);
    for _ in 0..s {
        f = f.mul(&f);
    }
    f
}

/// Joint computation of e^W and phi1(W) = sum_k W^k / (k+1)!
/// (= integral of e^{sW} over s in [0,1]).
///
/// Both series are evaluated at W / 2^s and recombined by the doublings
///   e^{2W} = (e^W)^2,  phi1(2W) = (e^W + I) phi1(W) / 2,
/// which keeps the truncation error of the 16-term base series below 1e-15
/// at base norm <= 1.
pub(crate) fn exp_and_phi1(w: &CMatrix) -> (CMatrix, CMatrix) {
    assert!(w.is_square());
    let n = w.rows();
    let ident = CMatrix::identity(n);
    let norm = w.norm_inf();
    let s = if norm > 1.0 {
        norm.log2().ceil() as u32
    } else {
        0
    };
    let m = w.scale(Complex64::new(1.0 / 2f64.powi(s as i32), 0.0));
    let mut exp_acc = ident.clone();
    let mut phi_acc = ident.clone();
    let mut term = ident.clone();
    let mut fact = 1.0f64;
    for k in 1..=16u32 {
        term = term.mul(&m);
        fact *= k as f64;
        exp_acc = exp_acc.add(&term.scale((1.0 / fact).into()));
        phi_acc = phi_acc.add(&term.scale((1.0 / (fact * (k + 1) as f64)).into()));
    }
    for _ in 0..s {
        phi_acc = exp_acc.add(&ident).mul(&phi_acc).scale(0.5.into());
        exp_acc = exp_acc.mul(&exp_acc);
    }
    (exp_acc, phi_acc)
}

// ---------------------------------------------------------------------------
// Triangular paths (real positive diagonal)

/// Square root of a lower triangular matrix with positive real diagonal,
/// by the diagonal-sweep recurrence. Exactly triangular; real input stays
/// real (all arithmetic is on real and positive quantities).
pub(crate) fn sqrt_triangular_lower(t: &CMatrix) -> CMatrix {
    let n = t.rows();
    let mut s = CMatrix::zeros(n, n);
    for i in 0..n {
        s[(i, i)] = t[(i, i)].sqrt();
    }
    for off in 1..n {
        for i in off..n {
            let j = i - off;
            let mut acc = t[(i, j)];
            for k in (j + 1)..i {
                acc -= s[(i, k)] * s[(k, j)];
            }
            s[(i, j)] = acc / (s[(i, i)] + s[(j, j)]);
        }
    }
    s
}

/// Logarithm of a lower triangular matrix with positive real diagonal,
/// by inverse scaling and squaring: repeated triangular square roots until
/// T is close to I, then the Mercator series. Works for repeated (even
/// defective) eigenvalues; output is exactly triangular and exactly real
/// for real input.
pub(crate) fn log_triangular_lower(t: &CMatrix) -> CMatrix {
    let n = t.rows();
    let ident = CMatrix::identity(n);
    let mut cur = t.clone();
    let mut k = 0u32;
    while cur.sub(&ident).max_abs() > 0.2 && k < 80 {
        cur = sqrt_triangular_lower(&cur);
        k += 1;
    }
    let e = cur.sub(&ident);
    let mut acc = CMatrix::zeros(n, n);
    let mut pw = ident;
    for j in 1..=24u32 {
        pw = pw.mul(&e);
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        acc = acc.add(&pw.scale((sign / j as f64).into()));
    }
    acc.scale(2f64.powi(k as i32).into())
}

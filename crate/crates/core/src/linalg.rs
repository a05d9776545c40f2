//! Singular value decomposition and the Moore-Penrose pseudoinverse.
//!
//! The SVD reduces the matrix with a Householder QR first and then runs
//! one-sided (Hestenes) Jacobi on the small triangular factor. Jacobi gives
//! singular values with high relative accuracy, which matters because the
//! bound engine chains several pseudoinverse projections per evaluation.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{abs, sqrt};
use crate::matrix::{dot, Matrix};

const MAX_SWEEPS: usize = 80;

/// Thin SVD `a = u * diag(s) * v^T` with `p = min(rows, cols)` components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdResult {
    /// `rows x p`, orthonormal columns.
    pub u: Matrix,
    /// Nonnegative, sorted descending.
    pub s: Vec<f64>,
    /// `cols x p`, orthonormal columns.
    pub v: Matrix,
}

impl SvdResult {
    /// `u * diag(s) * v^T`.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (x, s) in us.row_mut(i).iter_mut().zip(&self.s) {
                *x *= s;
            }
        }
        us.matmul_t(&self.v).expect("svd factors have matching inner dimension")
    }

    /// Numerical rank with singular values `<= rcond * s_max` treated as zero.
    pub fn rank(&self, rcond: f64) -> usize {
        let cutoff = rcond * self.s.first().copied().unwrap_or(0.0);
        self.s.iter().take_while(|&&s| s > cutoff && s > 0.0).count()
    }
}

/// Column-major scratch storage used by the factorizations.
struct Columns {
    len: usize,
    data: Vec<f64>,
}

impl Columns {
    fn from_matrix(a: &Matrix) -> Self {
        let (m, n) = a.shape();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for (j, &v) in a.row(i).iter().enumerate() {
                data[j * m + i] = v;
            }
        }
        Self { len: m, data }
    }

    fn identity(len: usize, count: usize) -> Self {
        let mut data = vec![0.0; len * count];
        for j in 0..count.min(len) {
            data[j * len + j] = 1.0;
        }
        Self { len, data }
    }

    fn count(&self) -> usize {
        self.data.len() / self.len
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.len..(j + 1) * self.len]
    }

    fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.len..(j + 1) * self.len]
    }

    fn pair_mut(&mut self, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
        debug_assert!(p < q);
        let len = self.len;
        let (head, tail) = self.data.split_at_mut(q * len);
        (&mut head[p * len..(p + 1) * len], &mut tail[..len])
    }

    fn to_matrix(&self, order: &[usize]) -> Matrix {
        Matrix::from_fn(self.len, order.len(), |i, k| self.data[order[k] * self.len + i])
    }
}

/// Householder QR of a tall matrix (`rows >= cols`). Returns the thin `Q`
/// (`rows x cols`) and the square upper-triangular `R`, both column-major.
fn householder_qr(a: &Matrix) -> (Columns, Columns) {
    let (m, n) = a.shape();
    let mut work = Columns::from_matrix(a);
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);

    for k in 0..n {
        let x = &work.col(k)[k..];
        let norm = sqrt(dot(x, x));
        if norm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vnorm = sqrt(dot(&v, &v));
        if vnorm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        for e in &mut v {
            *e /= vnorm;
        }
        for j in k..n {
            let col = &mut work.col_mut(j)[k..];
            let f = 2.0 * dot(&v, col);
            for (c, vi) in col.iter_mut().zip(&v) {
                *c -= f * vi;
            }
        }
        reflectors.push(v);
    }

    let mut r = Columns::identity(n, n);
    for j in 0..n {
        let src = work.col(j);
        let dst = r.col_mut(j);
        dst.fill(0.0);
        dst[..=j].copy_from_slice(&src[..=j]);
    }

    let mut q = Columns::identity(m, n);
    for (k, v) in reflectors.iter().enumerate().rev() {
        if v.is_empty() {
            continue;
        }
        for j in 0..n {
            let col = &mut q.col_mut(j)[k..];
            let f = 2.0 * dot(v, col);
            if f != 0.0 {
                for (c, vi) in col.iter_mut().zip(v) {
                    *c -= f * vi;
                }
            }
        }
    }
    (q, r)
}

/// One-sided Jacobi: rotates the columns of `w` until they are mutually
/// orthogonal, accumulating the rotations in `v`.
/// Column norm at or below which a column counts as exactly null.
fn null_norm(w: &Columns) -> f64 {
    w.count() as f64 * f64::EPSILON * sqrt(dot(&w.data, &w.data))
}

fn jacobi_orthogonalize(w: &mut Columns, v: &mut Columns) -> core::result::Result<(), usize> {
    let n = w.count();
    let tol = (n as f64 * f64::EPSILON).max(1e-15);
    // columns this small are numerically null; rotating them only churns rounding noise
    let floor = null_norm(w) * null_norm(w);
    for sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let (wp, wq) = w.pair_mut(p, q);
                let alpha = dot(wp, wp);
                let beta = dot(wq, wq);
                let gamma = dot(wp, wq);
                if alpha <= floor || beta <= floor || gamma == 0.0 || abs(gamma) <= tol * sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let sign = if zeta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (abs(zeta) + libm::hypot(1.0, zeta));
                let c = 1.0 / sqrt(1.0 + t * t);
                let s = c * t;
                rotate(wp, wq, c, s);
                let (vp, vq) = v.pair_mut(p, q);
                rotate(vp, vq, c, s);
            }
        }
        if !rotated {
            return Ok(());
        }
        if sweep + 1 == MAX_SWEEPS {
            return Err(MAX_SWEEPS);
        }
    }
    Ok(())
}

#[inline]
fn rotate(xp: &mut [f64], xq: &mut [f64], c: f64, s: f64) {
    for (a, b) in xp.iter_mut().zip(xq.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Fills the listed (null) columns of a square orthogonal-in-progress
/// basis with unit vectors orthogonal to every other column.
fn complete_basis(basis: &mut Columns, missing: &[usize]) {
    let len = basis.len;
    let mut candidate = 0usize;
    for &j in missing {
        loop {
            let mut e = vec![0.0; len];
            e[candidate % len] = 1.0;
            candidate += 1;
            // two passes of Gram-Schmidt
            for _ in 0..2 {
                // unfilled columns are zero and drop out
                for k in 0..basis.count() {
                    let col = basis.col(k);
                    let proj = dot(&e, col);
                    for (x, c) in e.iter_mut().zip(col) {
                        *x -= proj * c;
                    }
                }
            }
            let norm = sqrt(dot(&e, &e));
            if norm > 1e-3 {
                for (dst, x) in basis.col_mut(j).iter_mut().zip(&e) {
                    *dst = x / norm;
                }
                break;
            }
            if candidate > 2 * len {
                break;
            }
        }
    }
}

fn svd_tall(a: &Matrix) -> Result<SvdResult> {
    let (m, n) = a.shape();
    let (q, mut w) = householder_qr(a);
    let null_cutoff = null_norm(&w);
    let mut v = Columns::identity(n, n);
    jacobi_orthogonalize(&mut w, &mut v).map_err(|sweeps| Error::SvdNoConvergence { rows: m, cols: n, sweeps })?;

    let sigma: Vec<f64> = (0..n).map(|j| sqrt(dot(w.col(j), w.col(j)))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));

    let mut missing = Vec::new();
    for (j, &sj) in sigma.iter().enumerate() {
        if sj > null_cutoff && sj > 0.0 {
            for x in w.col_mut(j) {
                *x /= sj;
            }
        } else {
            missing.push(j);
        }
    }
    if !missing.is_empty() {
        for &j in &missing {
            w.col_mut(j).fill(0.0);
        }
        complete_basis(&mut w, &missing);
    }

    // u = Q * U_r
    let ur = w.to_matrix(&order);
    let qm = q.to_matrix(&(0..n).collect::<Vec<_>>());
    let u = qm.matmul(&ur)?;
    let vm = v.to_matrix(&order);
    let s = order.iter().map(|&i| sigma[i]).collect();
    Ok(SvdResult { u, s, v: vm })
}

/// Thin singular value decomposition.
pub fn svd(a: &Matrix) -> Result<SvdResult> {
    if a.rows() >= a.cols() {
        svd_tall(a)
    } else {
        let t = svd_tall(&a.transpose())?;
        Ok(SvdResult { u: t.v, s: t.s, v: t.u })
    }
}

/// Moore-Penrose pseudoinverse. Singular values `<= rcond * s_max` are
/// treated as zero.
pub fn pinv(a: &Matrix, rcond: f64) -> Result<Matrix> {
    if !(rcond > 0.0) {
        return Err(Error::Config(alloc::format!("rcond must be positive, got {rcond}")));
    }
    let f = svd(a)?;
    let rank = f.rank(rcond);
    let (m, n) = a.shape();
    let mut out = Matrix::zeros(n, m);
    for k in 0..rank {
        let inv = 1.0 / f.s[k];
        for i in 0..n {
            let vik = f.v[(i, k)] * inv;
            if vik == 0.0 {
                continue;
            }
            let row = out.row_mut(i);
            for (j, o) in row.iter_mut().enumerate() {
                *o += vik * f.u[(j, k)];
            }
        }
    }
    Ok(out)
}

/// Orthogonal projector onto the row space of a matrix `S`, i.e. the map
/// `T -> T * pinv(S) * S`.
///
/// Stores an orthonormal basis of the row space, so applying it costs two
/// thin products instead of forming the `d x d` projection.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSpaceProjector {
    /// `rank x d`, orthonormal rows.
    basis: Option<Matrix>,
    dim: usize,
}

impl RowSpaceProjector {
    pub fn new(source: &Matrix, rcond: f64) -> Result<Self> {
        if !(rcond > 0.0) {
            return Err(Error::Config(alloc::format!("rcond must be positive, got {rcond}")));
        }
        let f = svd(source)?;
        let rank = f.rank(rcond);
        let d = source.cols();
        let basis = (rank > 0).then(|| Matrix::from_fn(rank, d, |k, j| f.v[(j, k)]));
        Ok(Self { basis, dim: d })
    }

    pub fn rank(&self) -> usize {
        self.basis.as_ref().map_or(0, Matrix::rows)
    }

    /// `target * pinv(S) * S`.
    pub fn apply(&self, target: &Matrix) -> Result<Matrix> {
        if target.cols() != self.dim {
            return Err(Error::DimensionMismatch {
                op: "project",
                left: target.shape(),
                right: (self.rank(), self.dim),
            });
        }
        match &self.basis {
            Some(b) => target.matmul_t(b)?.matmul(b),
            None => Ok(Matrix::zeros(target.rows(), target.cols())),
        }
    }
}

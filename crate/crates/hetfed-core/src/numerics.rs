//! Dense real linear algebra: matrices, truncated SVD, and principal angles
//! between subspaces.
//!
//! The truncated SVD is computed from an eigendecomposition of the smaller
//! Gram matrix (M Mᵀ or Mᵀ M). Class matrices are tall-skinny or short-fat,
//! so the smaller Gram side keeps the cost bounded. Small Gram matrices go
//! through a Householder tridiagonalization + implicit-shift QL solver; large
//! ones (where only a few leading triplets are wanted) go through blocked
//! subspace iteration with Rayleigh-Ritz extraction.
//!
//! All routines are pure and deterministic: equal inputs produce bit-equal
//! outputs, including singular-vector signs.

use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;

// ── Errors ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NumericsError {
    /// A dimension was zero where a non-empty matrix is required.
    EmptyMatrix,
    /// Row/column counts do not match the operation's requirements.
    DimensionMismatch,
    /// The data length does not equal rows × cols.
    BadDataLength,
    /// An entry is NaN or infinite.
    NonFinite,
    /// Requested rank p outside 1..=min(rows, cols).
    RankOutOfRange,
    /// Columns are not orthonormal within tolerance.
    NotOrthonormal,
    /// The iterative eigensolver failed to converge.
    NoConvergence,
}

impl core::fmt::Display for NumericsError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::EmptyMatrix => write!(f, "matrix must have at least one row and column"),
            Self::DimensionMismatch => write!(f, "matrix dimensions do not match"),
            Self::BadDataLength => write!(f, "data length does not equal rows * cols"),
            Self::NonFinite => write!(f, "matrix entries must be finite"),
            Self::RankOutOfRange => write!(f, "requested rank outside 1..=min(rows, cols)"),
            Self::NotOrthonormal => write!(f, "columns are not orthonormal"),
            Self::NoConvergence => write!(f, "eigensolver did not converge"),
        }
    }
}

impl core::error::Error for NumericsError {}

// ── Matrix ──────────────────────────────────────────────────────────────

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, validating shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if rows == 0 || cols == 0 {
            return Err(NumericsError::EmptyMatrix);
        }
        if data.len() != rows * cols {
            return Err(NumericsError::BadDataLength);
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(NumericsError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column_vec(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// self · other.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, NumericsError> {
        if self.cols != other.rows {
            return Err(NumericsError::DimensionMismatch);
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let crow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (c, b) in crow.iter_mut().zip(brow) {
                    *c += a * b;
                }
            }
        }
        Ok(out)
    }

    /// selfᵀ · other, accumulated row by row so both operands stream
    /// contiguously.
    pub fn t_mul(&self, other: &Matrix) -> Result<Matrix, NumericsError> {
        if self.rows != other.rows {
            return Err(NumericsError::DimensionMismatch);
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for i in 0..self.rows {
            let arow = self.row(i);
            let brow = other.row(i);
            for (a_idx, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out.data[a_idx * other.cols..(a_idx + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// self · selfᵀ (rows × rows Gram matrix).
    pub fn gram_rows(&self) -> Matrix {
        let n = self.rows;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            let ri = self.row(i);
            for j in i..n {
                let v = dot(ri, self.row(j));
                out.data[i * n + j] = v;
                out.data[j * n + i] = v;
            }
        }
        out
    }

    /// selfᵀ · self (cols × cols Gram matrix).
    pub fn gram_cols(&self) -> Matrix {
        let n = self.cols;
        let mut out = Matrix::zeros(n, n);
        for i in 0..self.rows {
            let r = self.row(i);
            for (a, &va) in r.iter().enumerate() {
                if va == 0.0 {
                    continue;
                }
                let orow = &mut out.data[a * n + a..(a + 1) * n];
                for (o, &vb) in orow.iter_mut().zip(&r[a..]) {
                    *o += va * vb;
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                out.data[a * n + b] = out.data[b * n + a];
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        fmath::sqrt(self.data.iter().map(|v| v * v).sum())
    }
}

/// Dot product with four-way accumulator splitting. The fixed regrouping
/// keeps results deterministic while letting the backend vectorize.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        acc[0] += xa[0] * xb[0];
        acc[1] += xa[1] * xb[1];
        acc[2] += xa[2] * xb[2];
        acc[3] += xa[3] * xb[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

// ── Dense symmetric eigensolver ─────────────────────────────────────────

/// Householder reduction of a symmetric matrix to tridiagonal form, with the
/// accumulated orthogonal transform left in `v` (column convention).
fn tred2(v: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64]) {
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for item in d.iter().take(i) {
            scale += fmath::abs(*item);
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
                v[j * n + i] = 0.0;
            }
        } else {
            for item in d.iter_mut().take(i) {
                *item /= scale;
                h += *item * *item;
            }
            let mut f = d[i - 1];
            let mut g = fmath::sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[j * n + i] = f;
                g = e[j] + v[j * n + j] * f;
                for k in j + 1..i {
                    g += v[k * n + j] * d[k];
                    e[k] += v[k * n + j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k * n + j] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[(n - 1) * n + i] = v[i * n + i];
        v[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k * n + i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k * n + i + 1] * v[k * n + j];
                }
                for k in 0..=i {
                    v[k * n + j] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[k * n + i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
        v[(n - 1) * n + j] = 0.0;
    }
    v[(n - 1) * n + n - 1] = 1.0;
    e[0] = 0.0;
}

/// Implicit-shift QL iteration on the tridiagonal form produced by [`tred2`],
/// accumulating eigenvectors into `v`.
fn tql2(v: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64]) -> Result<(), NumericsError> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(fmath::abs(d[l]) + fmath::abs(e[l]));
        let mut m = l;
        while m < n {
            if fmath::abs(e[m]) <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 200 {
                    return Err(NumericsError::NoConvergence);
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = fmath::hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g2 = c * e[i];
                    h = c * p;
                    r = fmath::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g2;
                    d[i + 1] = h + s * (c * g2 + s * d[i]);
                    for k in 0..n {
                        h = v[k * n + i + 1];
                        v[k * n + i + 1] = s * v[k * n + i] + c * h;
                        v[k * n + i] = c * v[k * n + i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if fmath::abs(e[l]) <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Full eigendecomposition of a symmetric matrix, eigenvalues in
/// non-increasing order, eigenvectors as the columns of the returned matrix.
pub(crate) fn sym_eigen_desc(g: &Matrix) -> Result<(Vec<f64>, Matrix), NumericsError> {
    if g.rows != g.cols {
        return Err(NumericsError::DimensionMismatch);
    }
    let n = g.rows;
    let mut v = g.data.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, n, &mut d, &mut e);
    tql2(&mut v, n, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).unwrap().then(a.cmp(&b)));
    let values: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new_j, &old_j) in order.iter().enumerate() {
        for i in 0..n {
            vectors.data[i * n + new_j] = v[i * n + old_j];
        }
    }
    Ok((values, vectors))
}

// ── Blocked subspace iteration ──────────────────────────────────────────

const DENSE_EIGEN_LIMIT: usize = 512;
const SUBSPACE_OVERSAMPLE: usize = 8;

fn deterministic_unit_fill(n: usize, salt: u64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let bits = crate::streams::mix64(salt ^ (i as u64).wrapping_mul(0x9e37_79b9));
            (bits >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

fn col_norm(c: &[f64]) -> f64 {
    fmath::sqrt(dot(c, c))
}

/// Two-pass modified Gram-Schmidt over a set of columns, with a deterministic
/// refill for numerically dependent columns.
fn orthonormalize(cols: &mut [Vec<f64>]) {
    let n = cols[0].len();
    let mut refill = 0u64;
    for j in 0..cols.len() {
        loop {
            for _pass in 0..2 {
                for k in 0..j {
                    let r = dot(&cols[k], &cols[j]);
                    let (head, tail) = cols.split_at_mut(j);
                    for (t, s) in tail[0].iter_mut().zip(&head[k]) {
                        *t -= r * s;
                    }
                }
            }
            let norm = col_norm(&cols[j]);
            if norm > 1e-150 {
                for t in cols[j].iter_mut() {
                    *t /= norm;
                }
                break;
            }
            cols[j] = deterministic_unit_fill(n, 0xfeed_5eed ^ refill);
            refill += 1;
        }
    }
}

/// Top-k eigenpairs of a symmetric positive semidefinite matrix by blocked
/// subspace iteration with Rayleigh-Ritz extraction. Used when the matrix is
/// too large for the dense path and only a few leading pairs are needed.
pub(crate) fn sym_eigen_subspace(
    g: &Matrix,
    k: usize,
) -> Result<(Vec<f64>, Matrix), NumericsError> {
    if g.rows != g.cols {
        return Err(NumericsError::DimensionMismatch);
    }
    let n = g.rows;
    let b = (k + SUBSPACE_OVERSAMPLE).min(n);

    let mut x: Vec<Vec<f64>> = (0..b)
        .map(|j| deterministic_unit_fill(n, 0x5eed_0000 + j as u64))
        .collect();
    orthonormalize(&mut x);

    let apply = |cols: &[Vec<f64>]| -> Vec<Vec<f64>> {
        cols.iter()
            .map(|c| (0..n).map(|i| dot(g.row(i), c)).collect())
            .collect()
    };
    let ritz = |x: &[Vec<f64>], w: &[Vec<f64>]| -> Result<(Vec<f64>, Matrix), NumericsError> {
        let mut s = Matrix::zeros(b, b);
        for a in 0..b {
            for c in a..b {
                let v = 0.5 * (dot(&x[a], &w[c]) + dot(&x[c], &w[a]));
                s.set(a, c, v);
                s.set(c, a, v);
            }
        }
        sym_eigen_desc(&s)
    };
    let rotate = |w: &[Vec<f64>], p: &Matrix| -> Vec<Vec<f64>> {
        (0..b)
            .map(|c| {
                let mut out = vec![0.0; n];
                for (a, wa) in w.iter().enumerate() {
                    let coef = p.get(a, c);
                    if coef != 0.0 {
                        for (o, v) in out.iter_mut().zip(wa) {
                            *o += coef * v;
                        }
                    }
                }
                out
            })
            .collect()
    };

    // Stop on the Ritz-pair residuals ‖G r − θ r‖ rather than on Ritz-value
    // stability: eigenvalues settle quadratically, eigenvectors only
    // linearly, so a value-based test releases unconverged vectors.
    for _iter in 0..5000 {
        let w = apply(&x);
        let (theta, p) = ritz(&x, &w)?;
        let ritz_vecs = rotate(&x, &p);
        let g_ritz = rotate(&w, &p);
        let scale = fmath::abs(theta[0]).max(1e-300);
        let mut max_res = 0.0f64;
        for j in 0..k {
            let mut ss = 0.0;
            for (gr, r) in g_ritz[j].iter().zip(&ritz_vecs[j]) {
                let diff = gr - theta[j] * r;
                ss += diff * diff;
            }
            max_res = max_res.max(fmath::sqrt(ss));
        }
        if max_res <= 1e-11 * scale {
            let mut vectors = Matrix::zeros(n, k);
            for (j, col) in ritz_vecs.iter().take(k).enumerate() {
                let norm = col_norm(col);
                for i in 0..n {
                    vectors.data[i * k + j] = col[i] / norm;
                }
            }
            return Ok((theta[..k].to_vec(), vectors));
        }
        x = g_ritz;
        orthonormalize(&mut x);
    }
    Err(NumericsError::NoConvergence)
}

/// Top-k eigenpairs of a symmetric PSD matrix, dispatching between the dense
/// solver and subspace iteration on size.
pub(crate) fn sym_eigen_topk(g: &Matrix, k: usize) -> Result<(Vec<f64>, Matrix), NumericsError> {
    let n = g.rows;
    if n <= DENSE_EIGEN_LIMIT || k + SUBSPACE_OVERSAMPLE >= n / 4 {
        let (values, vectors) = sym_eigen_desc(g)?;
        let mut out = Matrix::zeros(n, k);
        for j in 0..k {
            for i in 0..n {
                out.data[i * k + j] = vectors.get(i, j);
            }
        }
        Ok((values[..k].to_vec(), out))
    } else {
        sym_eigen_subspace(g, k)
    }
}

// ── Orthonormal bases ───────────────────────────────────────────────────

const ORTHONORMAL_TOL: f64 = 1e-8;

/// A set of pairwise-orthonormal columns spanning a subspace of R^m.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    columns: Matrix,
}

impl OrthonormalBasis {
    /// Validates pairwise orthonormality to 1e-8 and wraps the columns.
    pub fn new(columns: Matrix) -> Result<Self, NumericsError> {
        if columns.cols > columns.rows {
            return Err(NumericsError::RankOutOfRange);
        }
        let p = columns.cols;
        for a in 0..p {
            let ca = columns.column_vec(a);
            for b in a..p {
                let target = if a == b { 1.0 } else { 0.0 };
                let v = dot(&ca, &columns.column_vec(b));
                if fmath::abs(v - target) > ORTHONORMAL_TOL {
                    return Err(NumericsError::NotOrthonormal);
                }
            }
        }
        Ok(Self { columns })
    }

    pub fn ambient_dim(&self) -> usize {
        self.columns.rows
    }

    pub fn rank(&self) -> usize {
        self.columns.cols
    }

    /// The m × p column matrix.
    pub fn matrix(&self) -> &Matrix {
        &self.columns
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.columns.column_vec(j)
    }
}

// ── Truncated SVD ───────────────────────────────────────────────────────

/// Result of [`truncated_svd`]: the top-p singular triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    pub left_basis: OrthonormalBasis,
    /// Non-increasing, each ≥ 0.
    pub singular_values: Vec<f64>,
    pub right_basis: Option<OrthonormalBasis>,
    /// Number of returned singular values above σ₁ · 1e-10. A value below p
    /// warns that the matrix is numerically rank-deficient at the requested
    /// truncation.
    pub estimated_rank: usize,
}

/// Orthogonalizes column j of `cols` against the previous columns and
/// normalizes it; falls back to deterministic standard-basis completion when
/// the column is numerically zero.
fn polish_column(cols: &mut [Vec<f64>], j: usize) {
    let n = cols[0].len();
    let mut candidate = 0usize;
    loop {
        for _pass in 0..2 {
            for k in 0..j {
                let r = dot(&cols[k], &cols[j]);
                let (head, tail) = cols.split_at_mut(j);
                for (t, s) in tail[0].iter_mut().zip(&head[k]) {
                    *t -= r * s;
                }
            }
        }
        let norm = col_norm(&cols[j]);
        if norm > 1e-12 {
            for t in cols[j].iter_mut() {
                *t /= norm;
            }
            return;
        }
        let mut e = vec![0.0; n];
        e[candidate % n] = 1.0;
        cols[j] = e;
        candidate += 1;
    }
}

/// Top-p singular triplets of a real matrix via the smaller Gram matrix.
///
/// The sign convention makes output deterministic: each left singular
/// vector's largest-magnitude component (lowest index on ties) is
/// non-negative. Trailing singular values of a rank-deficient matrix come
/// back as ~0 with `estimated_rank` flagging the deficiency.
pub fn truncated_svd(m: &Matrix, p: usize) -> Result<SvdResult, NumericsError> {
    if p == 0 || p > m.rows.min(m.cols) {
        return Err(NumericsError::RankOutOfRange);
    }
    if !m.as_slice().iter().all(|v| v.is_finite()) {
        return Err(NumericsError::NonFinite);
    }

    let left_is_eigen_side = m.rows <= m.cols;
    let gram = if left_is_eigen_side {
        m.gram_rows()
    } else {
        m.gram_cols()
    };
    let (lambda, eig_vecs) = sym_eigen_topk(&gram, p)?;
    let sigma: Vec<f64> = lambda
        .iter()
        .map(|&l| fmath::sqrt(l.max(0.0)))
        .collect();
    let sigma_max = sigma[0];

    let eigen_cols: Vec<Vec<f64>> = (0..p).map(|j| eig_vecs.column_vec(j)).collect();
    let mut derived_cols: Vec<Vec<f64>> = Vec::with_capacity(p);
    for (k, ec) in eigen_cols.iter().enumerate() {
        let mut col = if left_is_eigen_side {
            // vₖ = Mᵀ uₖ / σₖ
            let mut out = vec![0.0; m.cols];
            for (i, &u) in ec.iter().enumerate() {
                if u != 0.0 {
                    for (o, x) in out.iter_mut().zip(m.row(i)) {
                        *o += u * x;
                    }
                }
            }
            out
        } else {
            // uₖ = M vₖ / σₖ
            (0..m.rows).map(|i| dot(m.row(i), ec)).collect()
        };
        if sigma[k] > sigma_max * 1e-13 && sigma[k] > 0.0 {
            for t in col.iter_mut() {
                *t /= sigma[k];
            }
        }
        derived_cols.push(col);
        polish_column(&mut derived_cols, k);
    }

    let (mut u_cols, mut v_cols) = if left_is_eigen_side {
        (eigen_cols, derived_cols)
    } else {
        (derived_cols, eigen_cols)
    };

    for k in 0..p {
        let mut arg = 0;
        let mut best = -1.0;
        for (i, &v) in u_cols[k].iter().enumerate() {
            let a = fmath::abs(v);
            if a > best {
                best = a;
                arg = i;
            }
        }
        if u_cols[k][arg] < 0.0 {
            for t in u_cols[k].iter_mut() {
                *t = -*t;
            }
            for t in v_cols[k].iter_mut() {
                *t = -*t;
            }
        }
    }

    let cols_to_matrix = |cols: &[Vec<f64>], dim: usize| {
        let mut out = Matrix::zeros(dim, p);
        for (j, c) in cols.iter().enumerate() {
            for (i, &v) in c.iter().enumerate() {
                out.data[i * p + j] = v;
            }
        }
        out
    };
    let left_basis = OrthonormalBasis::new(cols_to_matrix(&u_cols, m.rows))?;
    let right_basis = OrthonormalBasis::new(cols_to_matrix(&v_cols, m.cols))?;
    let estimated_rank = if sigma_max == 0.0 {
        0
    } else {
        sigma.iter().filter(|&&s| s > sigma_max * 1e-10).count()
    };

    Ok(SvdResult {
        left_basis,
        singular_values: sigma,
        right_basis: Some(right_basis),
        estimated_rank,
    })
}

// ── Principal angles ────────────────────────────────────────────────────

/// Principal angles between the subspaces spanned by two orthonormal bases,
/// in degrees, ascending, each in [0°, 90°].
///
/// Computed as arccos of the singular values of the cross-Gram matrix UᵀW,
/// each singular value clamped into [0, 1] first (rounding can push them a
/// few ulps above 1).
pub fn principal_angles(
    u: &OrthonormalBasis,
    w: &OrthonormalBasis,
) -> Result<Vec<f64>, NumericsError> {
    if u.ambient_dim() != w.ambient_dim() {
        return Err(NumericsError::DimensionMismatch);
    }
    let cross = u.matrix().t_mul(w.matrix())?;
    let gram = if cross.rows <= cross.cols {
        cross.gram_rows()
    } else {
        cross.gram_cols()
    };
    let (lambda, _) = sym_eigen_desc(&gram)?;
    let count = u.rank().min(w.rank());
    Ok(lambda
        .iter()
        .take(count)
        .map(|&l| {
            let s = fmath::sqrt(l.max(0.0)).min(1.0);
            fmath::to_degrees(fmath::acos(s))
        })
        .collect())
}

// ── Tests ───────────────────────────────────────────────────────────────

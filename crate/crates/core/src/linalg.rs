//! Dense real linear algebra: a row-major `Matrix`, the cyclic Jacobi
//! eigensolver, Householder QR and the polar projection onto O(n).
//!
//! Everything is 64-bit and allocation-light; the sizes in this crate are
//! desk scale (a few thousand rows at most).

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Maximum absolute asymmetry accepted by [`eigh_symmetric`].
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Sweep cap for the Jacobi iteration.
pub const MAX_SWEEPS: usize = 100;
/// Above this order `eigh_symmetric` switches from Jacobi to Householder
/// tridiagonalization followed by implicit QL.
pub const JACOBI_MAX_DIM: usize = 256;
/// Pivot magnitude below which QR reports rank deficiency.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Wraps a row-major buffer. Panics if the length does not match.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "buffer length does not match {rows}x{cols}");
        Matrix { rows, cols, data }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix { rows: rows.len(), cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Matrix::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        assert_eq!(values.len(), self.rows);
        for (i, v) in values.iter().enumerate() {
            self.data[i * self.cols + j] = *v;
        }
    }

    /// Columns `range` as a new matrix.
    pub fn columns(&self, start: usize, end: usize) -> Matrix {
        Matrix::from_fn(self.rows, end - start, |i, j| self[(i, start + j)])
    }

    /// Rows `start..end` as a new matrix.
    pub fn row_block(&self, start: usize, end: usize) -> Matrix {
        Matrix::from_vec(end - start, self.cols, self.data[start * self.cols..end * self.cols].to_vec())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        let oc = other.cols;
        for i in 0..self.rows {
            let out_row = &mut out.data[i * oc..(i + 1) * oc];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * oc..(k + 1) * oc];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "t_matmul shape mismatch");
        let mut out = Matrix::zeros(self.cols, other.cols);
        let oc = other.cols;
        for k in 0..self.rows {
            let b_row = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * oc..(i + 1) * oc];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "matmul_t shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a, other.row(j));
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.shape(), other.shape());
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.shape(), other.shape());
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a * s).collect() }
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: f64, other: &Matrix) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|a| a * a).sum())
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Frobenius inner product.
    pub fn inner(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        dot(&self.data, &other.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Largest `|a_ij − a_ji|`; infinite for non-square input.
    pub fn max_asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.data[i * n + j] - self.data[j * n + i]).abs());
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }

    /// `‖selfᵀ·self − I‖_max`, the orthogonality defect of the columns.
    pub fn orthogonality_defect(&self) -> f64 {
        self.t_matmul(self).max_abs_diff(&Matrix::identity(self.cols))
    }

    /// Determinant by LU with partial pivoting.
    pub fn determinant(&self) -> Result<f64> {
        if !self.is_square() {
            return Err(Error::NotSquare { rows: self.rows, cols: self.cols });
        }
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for k in 0..n {
            let mut piv = k;
            for i in (k + 1)..n {
                if a[i * n + k].abs() > a[piv * n + k].abs() {
                    piv = i;
                }
            }
            if a[piv * n + k] == 0.0 {
                return Ok(0.0);
            }
            if piv != k {
                for j in 0..n {
                    a.swap(k * n + j, piv * n + j);
                }
                det = -det;
            }
            let d = a[k * n + k];
            det *= d;
            for i in (k + 1)..n {
                let f = a[i * n + k] / d;
                if f != 0.0 {
                    for j in k..n {
                        a[i * n + j] -= f * a[k * n + j];
                    }
                }
            }
        }
        Ok(det)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators keep the dependency chain short; the summation order
    // is fixed, so results are reproducible.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Eigenvalues in ascending order and the matching orthonormal eigenvectors
/// as matrix columns.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigenPairs {
    /// `V · diag(values) · Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        self.reconstruct_with(|x| x)
    }

    /// `V · diag(f(values)) · Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.vectors.rows();
        let k = self.values.len();
        let fv: Vec<f64> = self.values.iter().map(|&x| f(x)).collect();
        let mut scaled = self.vectors.clone();
        for i in 0..n {
            for j in 0..k {
                scaled[(i, j)] *= fv[j];
            }
        }
        scaled.matmul_t(&self.vectors)
    }
}

/// Symmetric eigendecomposition by the cyclic Jacobi method.
///
/// Sweeps visit every off-diagonal pair once in round-robin order, so each
/// round is a batch of disjoint rotations applied with contiguous row
/// access. Stops once the off-diagonal Frobenius norm drops below
/// `1e-12·‖m‖_F`. Eigenvalues come back ascending; each eigenvector is
/// flipped so that its largest-magnitude entry is positive (first such entry
/// on ties), which makes the output a deterministic function of the input.
pub fn eigh_symmetric(m: &Matrix) -> Result<EigenPairs> {
    if !m.is_square() {
        return Err(Error::NotSquare { rows: m.rows, cols: m.cols });
    }
    let asym = m.max_asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let n = m.rows;
    if n > JACOBI_MAX_DIM {
        let sym = Matrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
        let (values, vectors) = tridiagonal_ql(sym)?;
        return Ok(canonical_pairs(&values, &vectors));
    }
    let mut a = Matrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)])).into_vec();
    let mut v = Matrix::identity(n).into_vec();
    let scale = m.frobenius_norm();
    let tol = 1e-12 * scale;

    // Round-robin schedule over `players` slots; an odd size gets a bye.
    let players = n + (n % 2);
    let mut slots: Vec<usize> = (0..players).collect();
    let mut rotations: Vec<(usize, usize, f64, f64)> = Vec::with_capacity(players / 2);

    let mut converged = n <= 1 || scale == 0.0;
    let mut off = 0.0;
    let mut sweep = 0;
    while !converged {
        off = off_diagonal_norm(&a, n);
        if off <= tol {
            converged = true;
            break;
        }
        if sweep == MAX_SWEEPS {
            break;
        }
        let threshold = if sweep < 3 { 0.2 * off / (n * n) as f64 } else { 0.0 };
        for _round in 0..players - 1 {
            rotations.clear();
            for i in 0..players / 2 {
                let (x, y) = (slots[i], slots[players - 1 - i]);
                if x >= n || y >= n {
                    continue;
                }
                let (p, q) = if x < y { (x, y) } else { (y, x) };
                let apq = a[p * n + q];
                if apq == 0.0 || apq.abs() <= threshold {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let g = 100.0 * apq.abs();
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                let h = aqq - app;
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let t = 1.0 / (theta.abs() + libm::sqrt(1.0 + theta * theta));
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                rotations.push((p, q, c, t * c));
            }
            if !rotations.is_empty() {
                apply_round(&mut a, &mut v, n, &rotations);
            }
            slots[1..].rotate_right(1);
        }
        sweep += 1;
    }
    if !converged {
        return Err(Error::NoConvergence { sweeps: sweep, off_norm: off });
    }

    let values: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    Ok(canonical_pairs(&values, &Matrix::from_vec(n, n, v)))
}

/// Sorts eigenpairs ascending (stable in the input order) and applies the
/// sign convention.
fn canonical_pairs(raw_values: &[f64], raw_vectors: &Matrix) -> EigenPairs {
    let n = raw_vectors.rows();
    let k = raw_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| raw_values[i].total_cmp(&raw_values[j]).then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| raw_values[i]).collect();
    let mut vectors = Matrix::zeros(n, k);
    for (col, &src) in order.iter().enumerate() {
        let mut lead = 0;
        for i in 0..n {
            if raw_vectors[(i, src)].abs() > raw_vectors[(lead, src)].abs() {
                lead = i;
            }
        }
        let sign = if raw_vectors[(lead, src)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, col)] = sign * raw_vectors[(i, src)];
        }
    }
    EigenPairs { values, vectors }
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let x = a[i * n + j];
            s += x * x;
        }
    }
    libm::sqrt(2.0 * s)
}

/// Applies `A ← JᵀAJ` and `V ← VJ` for a batch of disjoint plane rotations
/// `(p, q, c, s)`, each annihilating its own `a[p][q]`.
fn apply_round(a: &mut [f64], v: &mut [f64], n: usize, rotations: &[(usize, usize, f64, f64)]) {
    for &(p, q, c, s) in rotations {
        let (head, tail) = a.split_at_mut(q * n);
        let row_p = &mut head[p * n..(p + 1) * n];
        let row_q = &mut tail[..n];
        for (x, y) in row_p.iter_mut().zip(row_q.iter_mut()) {
            let (g, h) = (*x, *y);
            *x = c * g - s * h;
            *y = s * g + c * h;
        }
    }
    for r in 0..n {
        let row = &mut a[r * n..(r + 1) * n];
        for &(p, q, c, s) in rotations {
            let (g, h) = (row[p], row[q]);
            row[p] = c * g - s * h;
            row[q] = s * g + c * h;
        }
        let row = &mut v[r * n..(r + 1) * n];
        for &(p, q, c, s) in rotations {
            let (g, h) = (row[p], row[q]);
            row[p] = c * g - s * h;
            row[q] = s * g + c * h;
        }
    }
    for &(p, q, _, _) in rotations {
        a[p * n + q] = 0.0;
        a[q * n + p] = 0.0;
    }
}

/// Householder reduction to tridiagonal form followed by the implicit QL
/// iteration (the EISPACK `tred2`/`tql2` pair). Returns unsorted eigenvalues
/// and eigenvectors as columns.
fn tridiagonal_ql(m: Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = m.rows();
    // Work on the transpose layout: `z[i]` is row i; the reduction below reads
    // and writes rows, which keeps the inner loops contiguous.
    let mut z = m.into_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];

    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = z[i * n..i * n + l + 1].iter().map(|x| x.abs()).sum();
            if scale == 0.0 {
                e[i] = z[i * n + l];
            } else {
                for k in 0..=l {
                    z[i * n + k] /= scale;
                    h += z[i * n + k] * z[i * n + k];
                }
                let f = z[i * n + l];
                let g = if f >= 0.0 { -libm::sqrt(h) } else { libm::sqrt(h) };
                e[i] = scale * g;
                h -= f * g;
                z[i * n + l] = f - g;
                let mut f = 0.0;
                for j in 0..=l {
                    z[j * n + i] = z[i * n + j] / h;
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += z[j * n + k] * z[i * n + k];
                    }
                    for k in (j + 1)..=l {
                        g += z[k * n + j] * z[i * n + k];
                    }
                    e[j] = g / h;
                    f += e[j] * z[i * n + j];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = z[i * n + j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        z[j * n + k] -= f * e[k] + g * z[i * n + k];
                    }
                }
            }
        } else {
            e[i] = z[i * n + l];
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for i in 0..n {
        if d[i] != 0.0 {
            for j in 0..i {
                let mut g = 0.0;
                for k in 0..i {
                    g += z[i * n + k] * z[k * n + j];
                }
                for k in 0..i {
                    z[k * n + j] -= g * z[k * n + i];
                }
            }
        }
        d[i] = z[i * n + i];
        z[i * n + i] = 1.0;
        for j in 0..i {
            z[j * n + i] = 0.0;
            z[i * n + j] = 0.0;
        }
    }

    // Implicit QL on (d, e); eigenvector updates act on columns of z, which
    // we keep transposed in `zt` so that each rotation touches two rows.
    let mut zt = Matrix::from_vec(n, n, z).transpose().into_vec();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut mm = l;
            while mm + 1 < n {
                let dd = d[mm].abs() + d[mm + 1].abs();
                if e[mm].abs() <= f64::EPSILON * dd {
                    break;
                }
                mm += 1;
            }
            if mm == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::NoConvergence { sweeps: iter, off_norm: e[l].abs() });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = libm::hypot(g, 1.0);
            g = d[mm] - d[l] + e[l] / (g + if g >= 0.0 { r.abs() } else { -r.abs() });
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut i = mm;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = libm::hypot(f, g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[mm] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let (head, tail) = zt.split_at_mut((i + 1) * n);
                let zi = &mut head[i * n..(i + 1) * n];
                let zi1 = &mut tail[..n];
                for (x, y) in zi.iter_mut().zip(zi1.iter_mut()) {
                    let f = *y;
                    *y = s * *x + c * f;
                    *x = c * *x - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[mm] = 0.0;
        }
    }
    Ok((d, Matrix::from_vec(n, n, zt).transpose()))
}

/// Thin Householder QR of a tall matrix, normalized so `diag(r) ≥ 0`.
///
/// Returns `RankDeficient` when a pivot of `r` falls below [`RANK_TOL`];
/// callers that sample random matrices simply redraw.
pub fn qr(m: &Matrix) -> Result<(Matrix, Matrix)> {
    let (rows, cols) = m.shape();
    if rows < cols {
        return Err(Error::ShapeMismatch { expected: (cols, cols), found: (rows, cols) });
    }
    let mut a = m.clone();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(cols);
    for k in 0..cols {
        let mut v: Vec<f64> = (k..rows).map(|i| a[(i, k)]).collect();
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
        if norm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = libm::sqrt(v.iter().map(|x| x * x).sum());
        if vnorm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        for x in v.iter_mut() {
            *x /= vnorm;
        }
        for j in k..cols {
            let proj: f64 = (k..rows).map(|i| v[i - k] * a[(i, j)]).sum();
            for i in k..rows {
                a[(i, j)] -= 2.0 * v[i - k] * proj;
            }
        }
        reflectors.push(v);
    }
    let mut r = Matrix::from_fn(cols, cols, |i, j| if j >= i { a[(i, j)] } else { 0.0 });
    let mut q = Matrix::from_fn(rows, cols, |i, j| if i == j { 1.0 } else { 0.0 });
    for k in (0..cols).rev() {
        let v = &reflectors[k];
        if v.is_empty() {
            continue;
        }
        for j in 0..cols {
            let proj: f64 = (k..rows).map(|i| v[i - k] * q[(i, j)]).sum();
            if proj != 0.0 {
                for i in k..rows {
                    q[(i, j)] -= 2.0 * v[i - k] * proj;
                }
            }
        }
    }
    for i in 0..cols {
        if r[(i, i)] < 0.0 {
            for j in i..cols {
                r[(i, j)] = -r[(i, j)];
            }
            for row in 0..rows {
                q[(row, i)] = -q[(row, i)];
            }
        }
    }
    for i in 0..cols {
        if r[(i, i)].abs() < RANK_TOL {
            return Err(Error::RankDeficient { column: i });
        }
    }
    Ok((q, r))
}

/// Nearest orthogonal matrix in Frobenius norm, `U·Vᵀ` from the singular
/// factors of `m`, computed as `m·(mᵀm)^{-1/2}`.
pub fn polar_orthogonal(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::NotSquare { rows: m.rows, cols: m.cols });
    }
    let n = m.rows;
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let gram = m.t_matmul(m);
    let eig = eigh_symmetric(&gram)?;
    let smallest = libm::sqrt(eig.values[0].max(0.0));
    if smallest < 1e-12 {
        return Err(Error::Singular { smallest });
    }
    let inv_sqrt = eig.reconstruct_with(|x| 1.0 / libm::sqrt(x));
    Ok(m.matmul(&inv_sqrt))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_matrix(seed: u64, rows: usize, cols: usize) -> Matrix {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Matrix::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn identity_eigenpairs() {
        let e = eigh_symmetric(&Matrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        assert!(e.vectors.orthogonality_defect() < 1e-15);
    }

    #[test]
    fn diagonal_eigenpairs_are_signed_permutation() {
        let e = eigh_symmetric(&Matrix::diagonal(&[2.0, 0.0, 1.0])).unwrap();
        assert_eq!(e.values, vec![0.0, 1.0, 2.0]);
        let expected = Matrix::from_rows(&[[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert_eq!(e.vectors, expected);
    }

    #[test]
    fn random_symmetric_reconstructs() {
        for seed in 0..100 {
            let b = lcg_matrix(seed, 6, 6);
            let m = b.add(&b.transpose());
            let e = eigh_symmetric(&m).unwrap();
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
            assert!(e.vectors.orthogonality_defect() < 1e-10);
            let err = e.reconstruct().sub(&m).frobenius_norm() / m.frobenius_norm();
            assert!(err < 1e-9, "seed {seed}: relative error {err}");
        }
    }

    #[test]
    fn large_path_reconstructs() {
        let n = JACOBI_MAX_DIM + 44;
        let b = lcg_matrix(5, n, n);
        let m = b.add(&b.transpose());
        let e = eigh_symmetric(&m).unwrap();
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        assert!(e.vectors.orthogonality_defect() < 1e-10);
        let err = e.reconstruct().sub(&m).frobenius_norm() / m.frobenius_norm();
        assert!(err < 1e-9, "relative error {err}");
    }

    #[test]
    fn eigh_rejects_bad_input() {
        assert!(matches!(eigh_symmetric(&Matrix::zeros(2, 3)), Err(Error::NotSquare { .. })));
        let m = Matrix::from_rows(&[[1.0, 2.0], [2.1, 1.0]]);
        assert!(matches!(eigh_symmetric(&m), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn eigh_is_deterministic() {
        let b = lcg_matrix(7, 9, 9);
        let m = b.add(&b.transpose());
        assert_eq!(eigh_symmetric(&m).unwrap(), eigh_symmetric(&m).unwrap());
    }

    #[test]
    fn leading_entry_sign_convention() {
        let b = lcg_matrix(3, 8, 8);
        let e = eigh_symmetric(&b.add(&b.transpose())).unwrap();
        for j in 0..8 {
            let col = e.vectors.column(j);
            let mut best = 0;
            for (i, x) in col.iter().enumerate() {
                if x.abs() > col[best].abs() {
                    best = i;
                }
            }
            assert!(col[best] > 0.0);
        }
    }

    #[test]
    fn qr_of_identity_and_permutation() {
        let (q, r) = qr(&Matrix::identity(4)).unwrap();
        assert_eq!(q, Matrix::identity(4));
        assert_eq!(r, Matrix::identity(4));
        let p = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let (q, r) = qr(&p).unwrap();
        assert!(q.matmul(&r).max_abs_diff(&p) < 1e-12);
        assert!(q.orthogonality_defect() < 1e-12);
    }

    #[test]
    fn qr_random_tall() {
        for seed in 0..50 {
            let m = lcg_matrix(seed, 8, 5);
            let (q, r) = qr(&m).unwrap();
            assert!(q.orthogonality_defect() < 1e-10);
            assert!(q.matmul(&r).max_abs_diff(&m) < 1e-9);
            for i in 0..5 {
                assert!(r[(i, i)] > 0.0);
                for j in 0..i {
                    assert_eq!(r[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn qr_flags_rank_deficiency() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]);
        assert!(matches!(qr(&m), Err(Error::RankDeficient { column: 1 })));
        assert!(matches!(qr(&Matrix::zeros(2, 3)), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn polar_fixed_points() {
        let d = Matrix::diagonal(&[2.0, 3.0]);
        assert!(polar_orthogonal(&d).unwrap().max_abs_diff(&Matrix::identity(2)) < 1e-12);
        let (q, _) = qr(&lcg_matrix(11, 5, 5)).unwrap();
        assert!(polar_orthogonal(&q).unwrap().max_abs_diff(&q) < 1e-12);
        let singular = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        assert!(matches!(polar_orthogonal(&singular), Err(Error::Singular { .. })));
    }

    #[test]
    fn determinant_small_cases() {
        let m = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(m.determinant().unwrap(), -1.0);
        let m = Matrix::from_rows(&[[2.0, 0.0, 0.0], [0.0, 3.0, 1.0], [0.0, 0.0, 4.0]]);
        assert!((m.determinant().unwrap() - 24.0).abs() < 1e-12);
    }
}

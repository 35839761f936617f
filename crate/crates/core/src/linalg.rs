//! Small dense linear algebra: Cholesky, Householder least squares,
//! projection matrices and SPD inversion.
//!
//! Everything is row-major and sized for desk-scale problems (tens to a few
//! thousand rows). Vectors are plain `&[f64]` / `Vec<f64>`.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Relative tolerance on the smallest `|R_kk|` of the QR factor.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Relative tolerance used by the symmetry check in [`cholesky`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Largest `n` for which [`projection`] materializes the `n × n` matrix.
pub const MAX_PROJECTION_DIM: usize = 10_000;

/// Dense row-major matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!(
                "matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite entry at ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let data = rows
            .iter()
            .flat_map(|r| r.as_ref().iter().copied())
            .collect();
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix must be non-empty");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut out = Self::zeros(dim, dim);
        for i in 0..dim {
            out[(i, i)] = 1.0;
        }
        out
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = rhs.row(k);
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix applied to vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `self * self^T`.
    pub fn gram_outer(&self) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.rows);
        for i in 0..self.rows {
            for j in 0..=i {
                let v = dot(self.row(i), self.row(j));
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Cholesky factor `L` (lower triangular, positive diagonal) with `S = L Lᵀ`.
pub fn cholesky(s: &Matrix) -> Result<Matrix> {
    if !s.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "cholesky needs a square matrix, got {}x{}",
            s.rows, s.cols
        )));
    }
    let n = s.rows;
    let scale = s.max_abs();
    let mut asymmetry: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            asymmetry = asymmetry.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    if asymmetry > SYMMETRY_TOLERANCE * scale {
        return Err(Error::NotSymmetric { asymmetry });
    }

    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let pivot = s[(j, j)] - norm_sq(&l.row(j)[..j]);
        if pivot.is_nan() || pivot <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: pivot,
            });
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let v = (s[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j])) / d;
            l[(i, j)] = v;
        }
    }
    Ok(l)
}

/// Inverse of a symmetric positive definite matrix via its Cholesky factor.
pub fn spd_inverse(s: &Matrix) -> Result<Matrix> {
    let l = cholesky(s)?;
    let n = l.rows;
    // Invert L in place (lower triangular), then form L^{-T} L^{-1}.
    let mut linv = Matrix::zeros(n, n);
    for j in 0..n {
        linv[(j, j)] = 1.0 / l[(j, j)];
        for i in j + 1..n {
            let mut acc = 0.0;
            for k in j..i {
                acc += l[(i, k)] * linv[(k, j)];
            }
            linv[(i, j)] = -acc / l[(i, i)];
        }
    }
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = 0.0;
            for k in i..n {
                acc += linv[(k, i)] * linv[(k, j)];
            }
            out[(i, j)] = acc;
            out[(j, i)] = acc;
        }
    }
    Ok(out)
}

/// Householder QR factorization of a tall matrix, reusable across
/// right-hand sides.
#[derive(Clone, Debug)]
pub struct QrFactor {
    rows: usize,
    cols: usize,
    // Reflector tails below the diagonal and R on and above it, row-major.
    packed: Vec<f64>,
    // Leading entry of each Householder vector.
    heads: Vec<f64>,
    betas: Vec<f64>,
}

impl QrFactor {
    pub fn new(a: &Matrix) -> Result<Self> {
        let (n, m) = (a.rows, a.cols);
        if n < m {
            return Err(Error::DimensionMismatch(format!(
                "least squares needs rows >= cols, got {n}x{m}"
            )));
        }
        let mut packed = a.data.clone();
        let mut heads = vec![0.0; m];
        let mut betas = vec![0.0; m];
        let at = |i: usize, j: usize| i * m + j;

        for k in 0..m {
            let norm = (k..n).map(|i| packed[at(i, k)].powi(2)).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let akk = packed[at(k, k)];
            let alpha = if akk > 0.0 { -norm } else { norm };
            let head = akk - alpha;
            let vtv = head * head + (k + 1..n).map(|i| packed[at(i, k)].powi(2)).sum::<f64>();
            let beta = 2.0 / vtv;
            for j in k + 1..m {
                let mut s = head * packed[at(k, j)];
                for i in k + 1..n {
                    s += packed[at(i, k)] * packed[at(i, j)];
                }
                let f = beta * s;
                packed[at(k, j)] -= f * head;
                for i in k + 1..n {
                    packed[at(i, j)] -= f * packed[at(i, k)];
                }
            }
            packed[at(k, k)] = alpha;
            heads[k] = head;
            betas[k] = beta;
        }

        let qr = Self {
            rows: n,
            cols: m,
            packed,
            heads,
            betas,
        };
        qr.check_rank()?;
        Ok(qr)
    }

    fn check_rank(&self) -> Result<()> {
        let diag: Vec<f64> = (0..self.cols)
            .map(|k| self.packed[k * self.cols + k].abs())
            .collect();
        let max = diag.iter().copied().fold(0.0, f64::max);
        let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
        let ratio = if max > 0.0 { min / max } else { 0.0 };
        if ratio.is_nan() || ratio <= RANK_TOLERANCE {
            return Err(Error::RankDeficient { ratio });
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Minimizer of `‖y − A x‖²`.
    pub fn solve(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side has length {}, expected {}",
                y.len(),
                self.rows
            )));
        }
        let (n, m) = (self.rows, self.cols);
        let mut w = y.to_vec();
        for k in 0..m {
            let head = self.heads[k];
            let mut s = head * w[k];
            for i in k + 1..n {
                s += self.packed[i * m + k] * w[i];
            }
            let f = self.betas[k] * s;
            w[k] -= f * head;
            for i in k + 1..n {
                w[i] -= f * self.packed[i * m + k];
            }
        }
        let mut x = vec![0.0; m];
        for k in (0..m).rev() {
            let mut acc = w[k];
            for j in k + 1..m {
                acc -= self.packed[k * m + j] * x[j];
            }
            x[k] = acc / self.packed[k * m + k];
        }
        Ok(x)
    }
}

/// Least-squares solution of `Phi θ ≈ y` by Householder QR.
pub fn solve_least_squares(phi: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    QrFactor::new(phi)?.solve(y)
}

/// Orthogonal projector `A (AᵀA)⁻¹ Aᵀ` onto the column space of `A`.
pub fn projection(a: &Matrix) -> Result<Matrix> {
    let n = a.rows;
    if n > MAX_PROJECTION_DIM {
        return Err(Error::Unsupported(format!(
            "explicit projection limited to n <= {MAX_PROJECTION_DIM}, got {n}"
        )));
    }
    let qr = QrFactor::new(a)?;
    let mut p = Matrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let coef = qr.solve(&e)?;
        let col = a.matvec(&coef)?;
        for (i, v) in col.into_iter().enumerate() {
            p[(i, j)] = v;
        }
        e[j] = 0.0;
    }
    // Symmetrize away rounding noise.
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
    Ok(p)
}

//! Dense row-major `f64` matrices and the elementwise / reduction kernels the
//! rest of the crate is built from.
//!
//! Everything is deliberately plain: owned `Vec<f64>`, loops over row slices,
//! no SIMD, no threading. Determinism matters more than speed here, and desk
//! scale keeps every matrix small.

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> CoreError {
    CoreError::ShapeMismatch {
        op,
        left_rows: a.rows,
        left_cols: a.cols,
        right_rows: b.rows,
        right_cols: b.cols,
    }
}

impl Matrix {
    /// Build a matrix from row-major data. Rejects length mismatches and
    /// non-finite entries: external data enters the system through here.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(CoreError::contract("matrix dimensions must be positive"));
        }
        if data.len() != rows * cols {
            return Err(CoreError::contract(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(CoreError::NonFinite("matrix construction"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(CoreError::contract("matrix needs at least one row"));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(CoreError::contract("ragged rows in matrix literal"));
        }
        let n = rows.len();
        Matrix::new(n, cols, rows.into_iter().flatten().collect())
    }

    /// Internal constructor for values produced by arithmetic; skips the
    /// finite scan so overflow can be detected where it matters (training).
    pub(crate) fn from_computed(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix::from_computed(rows, cols, vec![0.0; rows * cols])
    }

    pub fn full(rows: usize, cols: usize, value: f64) -> Self {
        Matrix::from_computed(rows, cols, vec![value; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix::from_computed(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    pub fn scalar(&self) -> Result<f64> {
        if !self.is_scalar() {
            return Err(CoreError::contract(format!(
                "expected 1x1 matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        Ok(self.data[0])
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Standard matrix product, accumulated in i-k-j order so the result is
    /// identical on every platform.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(shape_err("matmul", self, other));
        }
        let (n, m, p) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * p];
        for i in 0..n {
            let a_row = &self.data[i * m..(i + 1) * m];
            let out_row = &mut out[i * p..(i + 1) * p];
            for (k, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[k * p..(k + 1) * p];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Matrix::from_computed(n, p, out))
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Matrix::from_computed(self.cols, self.rows, out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(shape_err("add", self, other));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Matrix::from_computed(self.rows, self.cols, data))
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(shape_err("sub", self, other));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Matrix::from_computed(self.rows, self.cols, data))
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(shape_err("hadamard", self, other));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .collect();
        Ok(Matrix::from_computed(self.rows, self.cols, data))
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        let data = self.data.iter().map(|v| v * factor).collect();
        Matrix::from_computed(self.rows, self.cols, data)
    }

    /// Row-wise softmax with per-row max subtraction, so rows of magnitude
    /// 1e3 still normalize to finite probabilities.
    pub fn row_softmax(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            let row = self.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let dst = &mut out[r * self.cols..(r + 1) * self.cols];
            let mut sum = 0.0;
            for (d, &v) in dst.iter_mut().zip(row) {
                *d = (v - max).exp();
                sum += *d;
            }
            for d in dst.iter_mut() {
                *d /= sum;
            }
        }
        Matrix::from_computed(self.rows, self.cols, out)
    }

    pub fn relu(&self) -> Matrix {
        let data = self.data.iter().map(|v| v.max(0.0)).collect();
        Matrix::from_computed(self.rows, self.cols, data)
    }

    /// Per-row normalization: `(x - mean) / sqrt(var + eps) * gain + shift`.
    /// `gain` and `shift` are `1 x cols`; variance is the biased estimate.
    pub fn layer_norm(&self, gain: &Matrix, shift: &Matrix, eps: f64) -> Result<Matrix> {
        if gain.shape() != (1, self.cols) {
            return Err(shape_err("layer_norm gain", self, gain));
        }
        if shift.shape() != (1, self.cols) {
            return Err(shape_err("layer_norm shift", self, shift));
        }
        if !(eps > 0.0) {
            return Err(CoreError::contract("layer_norm eps must be positive"));
        }
        let n = self.cols as f64;
        let mut out = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            let row = self.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + eps).sqrt();
            let dst = &mut out[r * self.cols..(r + 1) * self.cols];
            for c in 0..self.cols {
                dst[c] = (row[c] - mean) * inv * gain.data[c] + shift.data[c];
            }
        }
        Ok(Matrix::from_computed(self.rows, self.cols, out))
    }

    /// Pairwise cosine similarity between the rows of `self` and the rows of
    /// `other`: output entry `(x, y)` compares row x with row y. Rows with
    /// zero norm score 0 so downstream softmax stays finite; results are
    /// clamped to `[-1, 1]` against rounding spill.
    pub fn cosine_sim(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(shape_err("cosine_sim", self, other));
        }
        let norms_a: Vec<f64> = (0..self.rows)
            .map(|r| self.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let norms_b: Vec<f64> = (0..other.rows)
            .map(|r| other.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let mut out = vec![0.0; self.rows * other.rows];
        for x in 0..self.rows {
            let a = self.row(x);
            for y in 0..other.rows {
                if norms_a[x] == 0.0 || norms_b[y] == 0.0 {
                    continue;
                }
                let dot: f64 = a.iter().zip(other.row(y)).map(|(p, q)| p * q).sum();
                out[x * other.rows + y] = (dot / (norms_a[x] * norms_b[y])).clamp(-1.0, 1.0);
            }
        }
        Ok(Matrix::from_computed(self.rows, other.rows, out))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Horizontal concatenation in argument order.
    pub fn concat_cols(parts: &[&Matrix]) -> Result<Matrix> {
        if parts.is_empty() {
            return Err(CoreError::contract("concat_cols needs at least one part"));
        }
        let rows = parts[0].rows;
        if parts.iter().any(|p| p.rows != rows) {
            return Err(CoreError::contract("concat_cols row counts differ"));
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Ok(Matrix::from_computed(rows, cols, data))
    }

    /// Columns `[start, end)` as a new matrix.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Matrix> {
        if start >= end || end > self.cols {
            return Err(CoreError::contract(format!(
                "slice_cols [{start}, {end}) out of range for {} columns",
                self.cols
            )));
        }
        let width = end - start;
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..end]);
        }
        Ok(Matrix::from_computed(self.rows, width, data))
    }

    pub(crate) fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Largest absolute entrywise difference; infinity when shapes differ.
pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

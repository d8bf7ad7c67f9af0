//! Dense row-major `f32` matrices and a seeded random stream.
//!
//! Every reduction accumulates in `f64` and walks its summation index in
//! ascending order, so results are bit-reproducible for identical inputs.

use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting length mismatches and
    /// non-finite elements.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::from_vec",
                format!("{} elements for {rows}x{cols}", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Matrix::from_vec"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("Matrix::from_rows", "ragged rows"));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn row_vector(data: Vec<f32>) -> Result<Self> {
        let n = data.len();
        Self::from_vec(1, n, data)
    }

    /// Wraps freshly computed data; callers inside the crate guarantee the
    /// length, finiteness is checked here.
    pub(crate) fn from_computed(
        op: &'static str,
        rows: usize,
        cols: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        debug_assert_eq!(data.len(), rows * cols);
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(op));
        }
        Ok(Self { rows, cols, data })
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

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f32]> {
        // chunks_exact(0) panics; a zero-column matrix has no meaningful rows
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Matrix {
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
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
}

/// Standard product `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape(
            "matmul",
            format!("{}x{} times {}x{}", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let (r, k, c) = (a.rows, a.cols, b.cols);
    let mut out = Vec::with_capacity(r * c);
    let mut acc = vec![0.0f64; c];
    for i in 0..r {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for kk in 0..k {
            let aik = a.data[i * k + kk] as f64;
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[kk * c..(kk + 1) * c];
            for (s, &bv) in acc.iter_mut().zip(brow) {
                *s += aik * bv as f64;
            }
        }
        out.extend(acc.iter().map(|&v| v as f32));
    }
    Matrix::from_computed("matmul", r, c, out)
}

/// `a · bᵀ` without materializing the transpose.
pub fn matmul_bt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::shape(
            "matmul_bt",
            format!("{}x{} times ({}x{})ᵀ", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let mut out = Vec::with_capacity(a.rows * b.rows);
    for arow in a.row_iter() {
        for brow in b.row_iter() {
            out.push(dot(arow, brow) as f32);
        }
    }
    Matrix::from_computed("matmul_bt", a.rows, b.rows, out)
}

/// `aᵀ · b` without materializing the transpose.
pub fn matmul_at(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::shape(
            "matmul_at",
            format!("({}x{})ᵀ times {}x{}", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let (n, r, c) = (a.rows, a.cols, b.cols);
    let mut out = Vec::with_capacity(r * c);
    let mut acc = vec![0.0f64; c];
    for i in 0..r {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for kk in 0..n {
            let aki = a.data[kk * r + i] as f64;
            if aki == 0.0 {
                continue;
            }
            let brow = &b.data[kk * c..(kk + 1) * c];
            for (s, &bv) in acc.iter_mut().zip(brow) {
                *s += aki * bv as f64;
            }
        }
        out.extend(acc.iter().map(|&v| v as f32));
    }
    Matrix::from_computed("matmul_at", r, c, out)
}

/// Mean of the rows, as a `1 × cols` matrix.
pub fn rowwise_mean(m: &Matrix) -> Result<Matrix> {
    if m.rows == 0 {
        return Err(Error::EmptyInput("rowwise_mean"));
    }
    let mut acc = vec![0.0f64; m.cols];
    for row in m.row_iter() {
        for (s, &v) in acc.iter_mut().zip(row) {
            *s += v as f64;
        }
    }
    let n = m.rows as f64;
    let data = acc.into_iter().map(|s| (s / n) as f32).collect();
    Matrix::from_computed("rowwise_mean", 1, m.cols, data)
}

/// Column sums as a `1 × cols` matrix.
pub fn column_sums(m: &Matrix) -> Result<Matrix> {
    let mut acc = vec![0.0f64; m.cols];
    for row in m.row_iter() {
        for (s, &v) in acc.iter_mut().zip(row) {
            *s += v as f64;
        }
    }
    let data = acc.into_iter().map(|s| s as f32).collect();
    Matrix::from_computed("column_sums", 1, m.cols, data)
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |s, (&x, &y)| s + x as f64 * y as f64)
}

/// Seeded random stream backed by ChaCha8 (rand_chacha), whose output for a
/// given seed is fixed across platforms and crate versions.
///
/// Derived draws are pinned here rather than delegated to `rand`
/// distributions:
/// - `next_f64`: top 53 bits of `next_u64`, scaled by 2⁻⁵³, in `[0, 1)`
/// - `below(n)`: `(next_u64 · n) >> 64`
/// - `normal`: Box–Muller on two `next_f64` draws, cosine branch only
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n`. `n` must be nonzero.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// One `f32` in `[lo, hi)`. Callers validate `lo < hi`.
    pub fn uniform_f32(&mut self, lo: f32, hi: f32) -> f32 {
        let u = self.next_f64();
        let v = (lo as f64 + (hi as f64 - lo as f64) * u) as f32;
        // rounding to f32 can land on hi itself
        if v >= hi {
            hi.next_down()
        } else {
            v
        }
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// `n` samples uniform in `[lo, hi)` as a `1 × n` matrix.
pub fn uniform_sample(rng: &mut RngStream, lo: f32, hi: f32, n: usize) -> Result<Matrix> {
    if lo >= hi || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Range(format!(
            "uniform_sample needs lo < hi, got [{lo}, {hi})"
        )));
    }
    let data = (0..n).map(|_| rng.uniform_f32(lo, hi)).collect();
    Ok(Matrix {
        rows: 1,
        cols: n,
        data,
    })
}

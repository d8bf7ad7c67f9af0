//! Sparse autoencoder: `h = ReLU(x·W_eᵀ + b_e)`, `x̂ = h·W_dᵀ + b_d`, trained
//! on `mse + λ·mean_batch(Σᵢ hᵢ)`.
//!
//! Gradients are written out by hand. With `B` rows, `d` inputs and
//! `G = 2(x̂ − x)/(B·d)`:
//!
//! ```text
//! ∂/∂W_d = Gᵀ·h            ∂/∂b_d = Σ_rows G
//! P      = [pre > 0] ⊙ (G·W_d + λ/B)
//! ∂/∂W_e = Pᵀ·x            ∂/∂b_e = Σ_rows P
//! ```
//!
//! The ReLU derivative is taken as 0 at 0, which also zeroes the L1
//! subgradient for inactive units.

mod adam;
mod train;

pub use adam::{adam_step, AdamState};
pub use train::{history_csv, train, TrainConfig, TrainHistory};

use crate::error::{Error, Result};
use crate::numkit::{self, Matrix, RngStream};

/// Encoder `W_e (m×d)`, `b_e (1×m)`; decoder `W_d (d×m)`, `b_d (1×d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeParams {
    w_enc: Matrix,
    b_enc: Matrix,
    w_dec: Matrix,
    b_dec: Matrix,
}

impl SaeParams {
    pub fn new(w_enc: Matrix, b_enc: Matrix, w_dec: Matrix, b_dec: Matrix) -> Result<Self> {
        let (m, d) = w_enc.shape();
        if d < 1 || m < 1 {
            return Err(Error::Validation("SAE dims must be >= 1".into()));
        }
        if b_enc.shape() != (1, m) || w_dec.shape() != (d, m) || b_dec.shape() != (1, d) {
            return Err(Error::shape(
                "SaeParams::new",
                format!(
                    "W_e {:?}, b_e {:?}, W_d {:?}, b_d {:?}",
                    w_enc.shape(),
                    b_enc.shape(),
                    w_dec.shape(),
                    b_dec.shape()
                ),
            ));
        }
        Ok(Self {
            w_enc,
            b_enc,
            w_dec,
            b_dec,
        })
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            w_enc: Matrix::zeros(hidden_dim, input_dim),
            b_enc: Matrix::zeros(1, hidden_dim),
            w_dec: Matrix::zeros(input_dim, hidden_dim),
            b_dec: Matrix::zeros(1, input_dim),
        }
    }

    /// Weights uniform in `±1/√fan_in` (encoder first, then decoder), biases
    /// zero.
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut RngStream) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim);
        let be = 1.0 / (input_dim as f32).sqrt();
        for v in p.w_enc.data_mut() {
            *v = rng.uniform_f32(-be, be);
        }
        let bd = 1.0 / (hidden_dim as f32).sqrt();
        for v in p.w_dec.data_mut() {
            *v = rng.uniform_f32(-bd, bd);
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_enc.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_enc.rows()
    }

    pub fn w_enc(&self) -> &Matrix {
        &self.w_enc
    }

    pub fn b_enc(&self) -> &Matrix {
        &self.b_enc
    }

    pub fn w_dec(&self) -> &Matrix {
        &self.w_dec
    }

    pub fn b_dec(&self) -> &Matrix {
        &self.b_dec
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut Matrix; 4] {
        [
            &mut self.w_enc,
            &mut self.b_enc,
            &mut self.w_dec,
            &mut self.b_dec,
        ]
    }

    pub(crate) fn tensors(&self) -> [&Matrix; 4] {
        [&self.w_enc, &self.b_enc, &self.w_dec, &self.b_dec]
    }
}

/// Post-ReLU code, `batch × m`, every element `>= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenCode(Matrix);

impl HiddenCode {
    pub fn new(h: Matrix) -> Result<Self> {
        if h.data().iter().any(|&v| v < 0.0) {
            return Err(Error::Validation("hidden code has negative entries".into()));
        }
        Ok(Self(h))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub mse: f64,
    pub sparsity: f64,
    pub total: f64,
}

/// Gradient buffers, shaped like [`SaeParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct SaeGrads {
    pub w_enc: Matrix,
    pub b_enc: Matrix,
    pub w_dec: Matrix,
    pub b_dec: Matrix,
}

impl SaeGrads {
    pub(crate) fn tensors(&self) -> [&Matrix; 4] {
        [&self.w_enc, &self.b_enc, &self.w_dec, &self.b_dec]
    }
}

fn add_row_bias(op: &'static str, mut m: Matrix, bias: &Matrix) -> Result<Matrix> {
    let cols = m.cols();
    for row in m.data_mut().chunks_exact_mut(cols.max(1)) {
        for (v, &b) in row.iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
    let (r, c) = m.shape();
    Matrix::from_computed(op, r, c, m.into_data())
}

pub fn encode(params: &SaeParams, x: &Matrix) -> Result<HiddenCode> {
    if x.cols() != params.input_dim() {
        return Err(Error::shape(
            "encode",
            format!(
                "input has {} cols, SAE expects {}",
                x.cols(),
                params.input_dim()
            ),
        ));
    }
    let pre = add_row_bias(
        "encode",
        numkit::matmul_bt(x, &params.w_enc)?,
        &params.b_enc,
    )?;
    let (r, c) = pre.shape();
    let h = pre.into_data().into_iter().map(|v| v.max(0.0)).collect();
    Ok(HiddenCode(Matrix::from_computed("encode", r, c, h)?))
}

pub fn decode(params: &SaeParams, h: &HiddenCode) -> Result<Matrix> {
    if h.0.cols() != params.hidden_dim() {
        return Err(Error::shape(
            "decode",
            format!(
                "code has {} cols, SAE expects {}",
                h.0.cols(),
                params.hidden_dim()
            ),
        ));
    }
    add_row_bias(
        "decode",
        numkit::matmul_bt(&h.0, &params.w_dec)?,
        &params.b_dec,
    )
}

/// `mse` averages over rows and columns; `sparsity` is `λ` times the
/// per-row L1 norm of `h`, averaged over rows.
pub fn loss(x: &Matrix, x_hat: &Matrix, h: &HiddenCode, lambda: f64) -> Result<LossBreakdown> {
    if x.shape() != x_hat.shape() || h.0.rows() != x.rows() {
        return Err(Error::shape(
            "loss",
            format!(
                "x {:?}, x̂ {:?}, h {:?}",
                x.shape(),
                x_hat.shape(),
                h.0.shape()
            ),
        ));
    }
    if x.rows() == 0 {
        return Err(Error::EmptyInput("loss"));
    }
    let sq: f64 = x
        .data()
        .iter()
        .zip(x_hat.data())
        .map(|(&a, &b)| {
            let e = a as f64 - b as f64;
            e * e
        })
        .sum();
    let l1: f64 = h.0.data().iter().map(|&v| (v as f64).abs()).sum();
    let mse = sq / (x.rows() * x.cols()) as f64;
    let sparsity = lambda * l1 / x.rows() as f64;
    Ok(LossBreakdown {
        mse,
        sparsity,
        total: mse + sparsity,
    })
}

fn widen(m: &Matrix) -> Vec<f64> {
    m.data().iter().map(|&v| v as f64).collect()
}

/// `out[r][c] = Σ_k a[r][k] · b[k][c]` with `a` given as `(rows, inner)` and
/// `b` as `(inner, cols)`, both row-major, summing `k` in order.
fn mul64(a: &[f64], b: &[f64], rows: usize, inner: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; rows * cols];
    for r in 0..rows {
        let acc = &mut out[r * cols..(r + 1) * cols];
        for k in 0..inner {
            let av = a[r * inner + k];
            if av == 0.0 {
                continue;
            }
            for (s, &bv) in acc.iter_mut().zip(&b[k * cols..(k + 1) * cols]) {
                *s += av * bv;
            }
        }
    }
    out
}

/// `aᵀ · b` for `a: (n, rows)` and `b: (n, cols)`.
fn mul64_at(a: &[f64], b: &[f64], n: usize, rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; rows * cols];
    for r in 0..rows {
        let acc = &mut out[r * cols..(r + 1) * cols];
        for k in 0..n {
            let av = a[k * rows + r];
            if av == 0.0 {
                continue;
            }
            for (s, &bv) in acc.iter_mut().zip(&b[k * cols..(k + 1) * cols]) {
                *s += av * bv;
            }
        }
    }
    out
}

/// `a · bᵀ` plus a row bias, for `a: (rows, inner)`, `b: (cols, inner)`.
fn mul64_bt_bias(a: &[f64], b: &[f64], bias: &[f64], rows: usize, inner: usize) -> Vec<f64> {
    let cols = bias.len();
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let arow = &a[r * inner..(r + 1) * inner];
        for c in 0..cols {
            let brow = &b[c * inner..(c + 1) * inner];
            let dot = arow.iter().zip(brow).fold(0.0f64, |s, (&x, &y)| s + x * y);
            out.push(dot + bias[c]);
        }
    }
    out
}

fn column_sums64(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; cols];
    for r in 0..rows {
        for (s, &v) in out.iter_mut().zip(&a[r * cols..(r + 1) * cols]) {
            *s += v;
        }
    }
    out
}

fn narrow(rows: usize, cols: usize, v: Vec<f64>) -> Result<Matrix> {
    Matrix::from_computed(
        "gradients",
        rows,
        cols,
        v.into_iter().map(|x| x as f32).collect(),
    )
}

/// Loss and gradients from one forward pass. Intermediates stay in `f64`;
/// only the returned gradients are rounded to `f32`.
pub fn loss_and_gradients(
    params: &SaeParams,
    x: &Matrix,
    lambda: f64,
) -> Result<(LossBreakdown, SaeGrads)> {
    let (d, m) = (params.input_dim(), params.hidden_dim());
    if x.cols() != d {
        return Err(Error::shape(
            "gradients",
            format!("input has {} cols, SAE expects {d}", x.cols()),
        ));
    }
    let b = x.rows();
    if b == 0 {
        return Err(Error::EmptyInput("gradients"));
    }
    let xs = widen(x);
    let w_e = widen(&params.w_enc);
    let w_d = widen(&params.w_dec);

    let pre = mul64_bt_bias(&xs, &w_e, &widen(&params.b_enc), b, d);
    let h: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
    let x_hat = mul64_bt_bias(&h, &w_d, &widen(&params.b_dec), b, m);

    let sq: f64 = x_hat.iter().zip(&xs).map(|(a, b)| (a - b) * (a - b)).sum();
    let mse = sq / (b * d) as f64;
    let sparsity = lambda * h.iter().sum::<f64>() / b as f64;
    let lb = LossBreakdown {
        mse,
        sparsity,
        total: mse + sparsity,
    };
    if !lb.total.is_finite() {
        return Err(Error::NonFinite("loss"));
    }

    let scale = 2.0 / (b * d) as f64;
    let g: Vec<f64> = x_hat
        .iter()
        .zip(&xs)
        .map(|(a, b)| scale * (a - b))
        .collect();
    let g_w_dec = mul64_at(&g, &h, b, d, m);
    let g_b_dec = column_sums64(&g, b, d);

    let l1 = lambda / b as f64;
    let mut p = mul64(&g, &w_d, b, d, m);
    for (pv, &pre_v) in p.iter_mut().zip(&pre) {
        *pv = if pre_v > 0.0 { *pv + l1 } else { 0.0 };
    }
    let g_w_enc = mul64_at(&p, &xs, b, m, d);
    let g_b_enc = column_sums64(&p, b, m);

    Ok((
        lb,
        SaeGrads {
            w_enc: narrow(m, d, g_w_enc)?,
            b_enc: narrow(1, m, g_b_enc)?,
            w_dec: narrow(d, m, g_w_dec)?,
            b_dec: narrow(1, d, g_b_dec)?,
        },
    ))
}

pub fn gradients(params: &SaeParams, x: &Matrix, lambda: f64) -> Result<SaeGrads> {
    loss_and_gradients(params, x, lambda).map(|(_, g)| g)
}

/// Mean over rows of `Σᵢ hᵢ`.
pub fn mean_code_l1(params: &SaeParams, x: &Matrix) -> Result<f64> {
    if x.rows() == 0 {
        return Err(Error::EmptyInput("mean_code_l1"));
    }
    let h = encode(params, x)?;
    Ok(h.0.data().iter().map(|&v| v as f64).sum::<f64>() / x.rows() as f64)
}

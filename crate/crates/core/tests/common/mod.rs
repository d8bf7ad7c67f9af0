//! Independent reference computations for the integration and acceptance
//! suites. Nothing here calls into the code paths it is used to check.

#![allow(dead_code)]

use saescope::actstore::{ActivationSet, CheckpointTag};
use saescope::numkit::{Matrix, RngStream};
use saescope::sae::SaeParams;

/// 64-bit copy of the SAE parameters, in the order W_e, b_e, W_d, b_d.
#[derive(Clone)]
pub struct Shadow {
    pub d: usize,
    pub m: usize,
    pub tensors: [Vec<f64>; 4],
}

impl Shadow {
    pub fn of(p: &SaeParams) -> Self {
        let up = |m: &Matrix| m.data().iter().map(|&v| v as f64).collect::<Vec<_>>();
        Self {
            d: p.input_dim(),
            m: p.hidden_dim(),
            tensors: [up(p.w_enc()), up(p.b_enc()), up(p.w_dec()), up(p.b_dec())],
        }
    }

    /// Pre-activations, row-major `batch × m`.
    pub fn pre(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let [we, be, _, _] = &self.tensors;
        x.iter()
            .map(|row| {
                (0..self.m)
                    .map(|i| {
                        be[i]
                            + (0..self.d)
                                .map(|j| we[i * self.d + j] * row[j])
                                .sum::<f64>()
                    })
                    .collect()
            })
            .collect()
    }

    /// `(mse, sparsity)` straight from the definitions.
    pub fn loss(&self, x: &[Vec<f64>], lambda: f64) -> (f64, f64) {
        let [_, _, wd, bd] = &self.tensors;
        let (mut sq, mut l1) = (0.0, 0.0);
        for (row, pre) in x.iter().zip(self.pre(x)) {
            let h: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
            l1 += h.iter().map(|v| v.abs()).sum::<f64>();
            for j in 0..self.d {
                let xh = bd[j] + (0..self.m).map(|i| wd[j * self.m + i] * h[i]).sum::<f64>();
                sq += (xh - row[j]).powi(2);
            }
        }
        let b = x.len() as f64;
        (sq / (b * self.d as f64), lambda * l1 / b)
    }
}

/// Central differences of the total loss over every parameter coordinate.
pub fn finite_difference_grads(
    s: &Shadow,
    x: &[Vec<f64>],
    lambda: f64,
    step: f64,
) -> [Vec<f64>; 4] {
    let total = |s: &Shadow| {
        let (a, b) = s.loss(x, lambda);
        a + b
    };
    let mut out: [Vec<f64>; 4] = Default::default();
    let mut work = s.clone();
    for (t, slot) in out.iter_mut().enumerate() {
        for k in 0..s.tensors[t].len() {
            let orig = s.tensors[t][k];
            work.tensors[t][k] = orig + step;
            let plus = total(&work);
            work.tensors[t][k] = orig - step;
            let minus = total(&work);
            work.tensors[t][k] = orig;
            slot.push((plus - minus) / (2.0 * step));
        }
    }
    out
}

pub fn rows_f64(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter()
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect()
}

pub fn random_matrix(rng: &mut RngStream, r: usize, c: usize, lo: f32, hi: f32) -> Matrix {
    let data = (0..r * c).map(|_| rng.uniform_f32(lo, hi)).collect();
    Matrix::from_vec(r, c, data).unwrap()
}

pub struct GradInstance {
    pub params: SaeParams,
    pub x: Matrix,
    pub lambda: f64,
}

/// Random SAE and batch with every pre-activation at least `margin` away
/// from the ReLU kink, so finite differences never straddle it.
pub fn grad_instance(seed: u64, lambda: f64, margin: f64) -> GradInstance {
    let mut rng = RngStream::new(seed);
    loop {
        let d = 2 + rng.below(15);
        let m = 2 + rng.below(23);
        let b = 1 + rng.below(8);
        let params = SaeParams::new(
            random_matrix(&mut rng, m, d, -1.0, 1.0),
            random_matrix(&mut rng, 1, m, -0.5, 0.5),
            random_matrix(&mut rng, d, m, -1.0, 1.0),
            random_matrix(&mut rng, 1, d, -0.5, 0.5),
        )
        .unwrap();
        let x = random_matrix(&mut rng, b, d, -1.0, 1.0);
        let pre = Shadow::of(&params).pre(&rows_f64(&x));
        if pre.iter().flatten().all(|v| v.abs() >= margin) {
            return GradInstance { params, x, lambda };
        }
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn two_pass_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Top-n by full sort on `(−variance, index)`.
pub fn brute_force_top(variances: &[f64], n: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = variances.iter().copied().enumerate().collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(n);
    all
}

pub fn pooled_set(data: Matrix, layer: usize, dataset: &str, tag: CheckpointTag) -> ActivationSet {
    ActivationSet::pooled("fixture", tag, dataset, layer, data).unwrap()
}

/// Pre/post layer sets where each post layer is the pre layer plus noise of
/// magnitude `noise[layer − 1]` relative to the row norm. Noise directions
/// are fixed across layers so growing magnitude means growing angle.
pub fn drift_fixture(
    layers: usize,
    dim: usize,
    samples: usize,
    noise: &[f32],
    seed: u64,
) -> (Vec<ActivationSet>, Vec<ActivationSet>) {
    let mut rng = RngStream::new(seed);
    let base = random_matrix(&mut rng, samples, dim, 0.5, 1.5);
    let dir = random_matrix(&mut rng, samples, dim, -1.0, 1.0);
    let mut pre = Vec::new();
    let mut post = Vec::new();
    for l in 1..=layers {
        let amp = noise[l - 1];
        let shifted: Vec<f32> = base
            .data()
            .iter()
            .zip(dir.data())
            .map(|(&b, &n)| b + amp * n)
            .collect();
        pre.push(pooled_set(
            base.clone(),
            l,
            "drift",
            CheckpointTag::Pretrained,
        ));
        post.push(pooled_set(
            Matrix::from_vec(samples, dim, shifted).unwrap(),
            l,
            "drift",
            CheckpointTag::Finetuned,
        ));
    }
    (pre, post)
}

/// SplitMix64, used where a reference must not share the library's RNG.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn gauss(&mut self) -> f64 {
        let u = 1.0 - self.unit();
        let v = self.unit();
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }
}

/// `scale · E‖Σ c_a·atom_a‖` for a fresh random unit-norm dictionary, k
/// distinct atoms per draw and coefficients uniform in [0.5, 1).
pub fn expected_synth_norm(
    dim: usize,
    atoms: usize,
    k: usize,
    scale: f64,
    draws: usize,
    seed: u64,
) -> f64 {
    let mut g = SplitMix(seed);
    let dict: Vec<Vec<f64>> = (0..atoms)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| g.gauss()).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
        .collect();
    let mut total = 0.0;
    for _ in 0..draws {
        let mut picked: Vec<usize> = Vec::with_capacity(k);
        while picked.len() < k {
            let a = (g.next_u64() % atoms as u64) as usize;
            if !picked.contains(&a) {
                picked.push(a);
            }
        }
        let mut x = vec![0.0; dim];
        for a in picked {
            let c = 0.5 + 0.5 * g.unit();
            for (xi, di) in x.iter_mut().zip(&dict[a]) {
                *xi += c * di;
            }
        }
        total += x.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    scale * total / draws as f64
}

/// Straight-loop SAE training kept entirely in f64: hand-written forward
/// pass, gradients and Adam. Only the initial weights and the per-epoch
/// shuffle come from the library's seeded stream, so runs line up with
/// `sae::train`. Returns per-epoch `(mse, sparsity)` as row-weighted means.
pub fn reference_train(
    x: &Matrix,
    m: usize,
    lambda: f64,
    lr: f64,
    epochs: usize,
    batch: usize,
    seed: u64,
) -> Vec<(f64, f64)> {
    let (n, d) = x.shape();
    let mut rng = RngStream::new(seed);
    let init = SaeParams::init(d, m, &mut rng);
    let mut s = Shadow::of(&init);
    let mut first: [Vec<f64>; 4] = s.tensors.clone().map(|t| vec![0.0; t.len()]);
    let mut second = first.clone();
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
    let rows = rows_f64(x);
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0u64;
    let mut history = Vec::new();

    for _ in 0..epochs {
        rng.shuffle(&mut order);
        let (mut mse_sum, mut sp_sum) = (0.0, 0.0);
        for chunk in order.chunks(batch) {
            let xb: Vec<&Vec<f64>> = chunk.iter().map(|&i| &rows[i]).collect();
            let bn = xb.len() as f64;
            let [we, be, wd, bd] = &s.tensors;
            let mut grads: [Vec<f64>; 4] = s.tensors.clone().map(|t| vec![0.0; t.len()]);
            let (mut sq, mut l1) = (0.0, 0.0);
            for xr in &xb {
                let pre: Vec<f64> = (0..m)
                    .map(|i| be[i] + (0..d).map(|j| we[i * d + j] * xr[j]).sum::<f64>())
                    .collect();
                let h: Vec<f64> = pre.iter().map(|&p| p.max(0.0)).collect();
                l1 += h.iter().sum::<f64>();
                let mut g = vec![0.0; d];
                for j in 0..d {
                    let xh = bd[j] + (0..m).map(|i| wd[j * m + i] * h[i]).sum::<f64>();
                    sq += (xh - xr[j]).powi(2);
                    g[j] = 2.0 * (xh - xr[j]) / (bn * d as f64);
                }
                for j in 0..d {
                    grads[3][j] += g[j];
                    for i in 0..m {
                        grads[2][j * m + i] += g[j] * h[i];
                    }
                }
                for i in 0..m {
                    if pre[i] > 0.0 {
                        let back = (0..d).map(|j| g[j] * wd[j * m + i]).sum::<f64>() + lambda / bn;
                        grads[1][i] += back;
                        for j in 0..d {
                            grads[0][i * d + j] += back * xr[j];
                        }
                    }
                }
            }
            mse_sum += sq / d as f64;
            sp_sum += lambda * l1;
            step += 1;
            let t = step as f64;
            for k in 0..4 {
                for (idx, p) in s.tensors[k].iter_mut().enumerate() {
                    let gv = grads[k][idx];
                    first[k][idx] = b1 * first[k][idx] + (1.0 - b1) * gv;
                    second[k][idx] = b2 * second[k][idx] + (1.0 - b2) * gv * gv;
                    let mh = first[k][idx] / (1.0 - b1.powf(t));
                    let vh = second[k][idx] / (1.0 - b2.powf(t));
                    *p -= lr * mh / (vh.sqrt() + eps);
                }
            }
        }
        history.push((mse_sum / n as f64, sp_sum / n as f64));
    }
    history
}

/// Final-epoch total loss of `reference_train` on the seed-7 synthetic set
/// (d 64, 128 atoms, k 4, 2000 samples, scale 0.05) under the default recipe.
pub const REFERENCE_FINAL_TOTAL: f64 = 5.90848301e-4;

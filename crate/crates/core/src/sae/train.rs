use crate::actstore::{ActivationSet, SaeModelFile};
use crate::error::{Error, Result};
use crate::numkit::RngStream;
use crate::report::fmt_sig9;

use super::{adam_step, loss_and_gradients, AdamState, LossBreakdown, SaeParams};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Width `m` of the hidden code.
    pub hidden_dim: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            learning_rate: 2e-5,
            epochs: 10,
            batch_size: 64,
            hidden_dim: 1024,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.batch_size < 1 {
            return bad("batch size must be >= 1".into());
        }
        if self.hidden_dim < 1 {
            return bad("hidden dim must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return bad("adam eps must be > 0".into());
        }
        Ok(())
    }
}

/// Per-epoch mean losses.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<LossBreakdown>,
}

/// Trains an SAE on every row of `data` (pooled or per-token).
///
/// Each epoch visits the rows in a fresh seeded shuffle, in minibatches of
/// `batch_size`; a short final batch is trained on its own mean loss. Epoch
/// losses are row-weighted means of the pre-update batch losses.
pub fn train(data: &ActivationSet, cfg: &TrainConfig) -> Result<(SaeModelFile, TrainHistory)> {
    cfg.validate()?;
    let x = data.data();
    let n = x.rows();
    if n == 0 {
        return Err(Error::Validation(
            "cannot train on an empty activation set".into(),
        ));
    }

    let mut rng = RngStream::new(cfg.seed);
    let mut params = SaeParams::init(x.cols(), cfg.hidden_dim, &mut rng);
    let mut state = AdamState::new(&params);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=cfg.epochs {
        let diverged = |e: Error| match e {
            Error::NonFinite(_) => Error::Divergence { epoch },
            other => other,
        };
        rng.shuffle(&mut order);
        let (mut mse, mut sparsity) = (0.0f64, 0.0f64);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = x.select_rows(chunk);
            let (lb, grads) = loss_and_gradients(&params, &batch, cfg.lambda).map_err(diverged)?;
            if !lb.total.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            let w = chunk.len() as f64;
            mse += lb.mse * w;
            sparsity += lb.sparsity * w;
            adam_step(&mut params, &grads, &mut state, cfg).map_err(diverged)?;
        }
        let (mse, sparsity) = (mse / n as f64, sparsity / n as f64);
        history.epochs.push(LossBreakdown {
            mse,
            sparsity,
            total: mse + sparsity,
        });
    }

    let model = SaeModelFile {
        lambda: cfg.lambda,
        seed: cfg.seed,
        epochs_trained: cfg.epochs,
        params,
    };
    Ok((model, history))
}

/// `epoch,mse,sparsity,total` with one row per epoch, 1-based.
pub fn history_csv(history: &TrainHistory) -> String {
    let mut out = String::from("epoch,mse,sparsity,total\n");
    for (i, lb) in history.epochs.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            i + 1,
            fmt_sig9(lb.mse),
            fmt_sig9(lb.sparsity),
            fmt_sig9(lb.total)
        ));
    }
    out
}

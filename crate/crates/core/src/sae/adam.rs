use crate::error::{Error, Result};
use crate::numkit::Matrix;

use super::{SaeGrads, SaeParams, TrainConfig};

/// First and second moment buffers, one per parameter tensor, in the order
/// `W_e, b_e, W_d, b_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first: [Vec<f32>; 4],
    second: [Vec<f32>; 4],
    step: u64,
}

impl AdamState {
    pub fn new(params: &SaeParams) -> Self {
        let zeros = |m: &Matrix| vec![0.0f32; m.data().len()];
        let t = params.tensors();
        Self {
            first: t.map(zeros),
            second: t.map(zeros),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f32>; 4] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f32>; 4] {
        &self.second
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut SaeParams,
    grads: &SaeGrads,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    for ((p, g), m) in params
        .tensors()
        .iter()
        .zip(grads.tensors())
        .zip(&state.first)
    {
        if p.shape() != g.shape() || m.len() != p.data().len() {
            return Err(Error::shape(
                "adam_step",
                format!("param {:?} vs grad {:?}", p.shape(), g.shape()),
            ));
        }
    }

    state.step += 1;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let t = state.step as f64;
    let bc1 = 1.0 - b1.powf(t);
    let bc2 = 1.0 - b2.powf(t);
    let lr = cfg.learning_rate;
    let eps = cfg.eps;

    for (k, (p, g)) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .enumerate()
    {
        let (m, v) = (&mut state.first[k], &mut state.second[k]);
        for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            let gv = gv as f64;
            let m_new = b1 * *mv as f64 + (1.0 - b1) * gv;
            let v_new = b2 * *vv as f64 + (1.0 - b2) * gv * gv;
            *mv = m_new as f32;
            *vv = v_new as f32;
            let update = lr * (m_new / bc1) / ((v_new / bc2).sqrt() + eps);
            *pv = (*pv as f64 - update) as f32;
        }
        if p.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("adam_step"));
        }
    }
    Ok(())
}

use ndarray::{Array2, Zip};

use super::params::ModelParams;
use crate::autodiff::{GradientSet, TensorGrad};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay (`p -= lr * wd * p`), applied to updated entries only.
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First/second moment accumulators, one pair per parameter slot.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<_> = params.slots().iter().map(|t| Array2::zeros(t.raw_dim())).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update.
///
/// Dense gradients update the whole tensor; row gradients (embedding
/// tables) update only the listed rows and their moments. Slots without a
/// gradient are left untouched.
pub fn adam_step(params: &mut ModelParams, grads: &GradientSet, cfg: &AdamConfig, state: &mut AdamState) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2, lr, eps, wd) = (cfg.beta1, cfg.beta2, cfg.lr, cfg.eps, cfg.weight_decay);

    let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let mhat = *m / c1;
        let vhat = *v / c2;
        *p -= lr * (mhat / (vhat.sqrt() + eps) + wd * *p);
    };

    for (k, p) in params.slots_mut().into_iter().enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        match &grads.grads[k] {
            TensorGrad::Zero => {}
            TensorGrad::Dense(g) => {
                Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| update(p, m, v, g));
            }
            TensorGrad::Rows { rows, values } => {
                for (j, &r) in rows.iter().enumerate() {
                    Zip::from(p.row_mut(r))
                        .and(m.row_mut(r))
                        .and(v.row_mut(r))
                        .and(values.row(j))
                        .for_each(|p, m, v, &g| update(p, m, v, g));
                }
            }
        }
    }
}

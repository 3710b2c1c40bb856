//! Adam for network weights, momentum SGD for latents.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::project_unit_ball_in_place;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamMoments {
    pub m: Tensor,
    pub v: Tensor,
    pub step: u64,
}

impl AdamMoments {
    pub fn zeros(shape: &[usize]) -> Self {
        AdamMoments {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            step: 0,
        }
    }
}

fn check(param: &Tensor, grad: &Tensor, op: &'static str) -> Result<()> {
    param.expect_same_shape(grad, op)?;
    if !grad.all_finite() {
        return Err(Error::NonFinite(format!("{op} gradient")));
    }
    Ok(())
}

/// One bias-corrected Adam update.
pub fn adam_step(param: &mut Tensor, grad: &Tensor, state: &mut AdamMoments, lr: f64, cfg: &AdamConfig) -> Result<()> {
    check(param, grad, "adam_step")?;
    param.expect_same_shape(&state.m, "adam_step(moments)")?;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (m, v) = (state.m.data_mut(), state.v.data_mut());
    for (i, (p, &g)) in param.data_mut().iter_mut().zip(grad.data()).enumerate() {
        let g = g as f64;
        let mi = cfg.beta1 * m[i] as f64 + (1.0 - cfg.beta1) * g;
        let vi = cfg.beta2 * v[i] as f64 + (1.0 - cfg.beta2) * g * g;
        m[i] = mi as f32;
        v[i] = vi as f32;
        let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + cfg.eps);
        *p = (*p as f64 - update) as f32;
    }
    Ok(())
}

/// `v ← μv + g; x ← x − lr·v`, without projection.
pub fn sgd_momentum_update(x: &mut Tensor, grad: &Tensor, velocity: &mut Tensor, lr: f64, momentum: f64) -> Result<()> {
    check(x, grad, "sgd_momentum_step")?;
    x.expect_same_shape(velocity, "sgd_momentum_step(velocity)")?;
    for ((xi, vi), &g) in x.data_mut().iter_mut().zip(velocity.data_mut()).zip(grad.data()) {
        let v = momentum * *vi as f64 + g as f64;
        *vi = v as f32;
        *xi = (*xi as f64 - lr * v) as f32;
    }
    Ok(())
}

/// [`sgd_momentum_update`] followed by unit-ball projection of each row
/// (a vector is a single row).
pub fn sgd_momentum_step(x: &mut Tensor, grad: &Tensor, velocity: &mut Tensor, lr: f64, momentum: f64) -> Result<()> {
    sgd_momentum_update(x, grad, velocity, lr, momentum)?;
    project_rows(x);
    Ok(())
}

pub(crate) fn project_rows(x: &mut Tensor) {
    if x.rank() == 2 {
        for i in 0..x.shape()[0] {
            project_unit_ball_in_place(x.row_mut(i));
        }
    } else {
        project_unit_ball_in_place(x.data_mut());
    }
}

/// Adam moments per network parameter and SGD velocity per latent entry.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizerState {
    pub adam: BTreeMap<String, AdamMoments>,
    pub velocity: BTreeMap<String, Tensor>,
}

impl OptimizerState {
    pub(crate) fn adam_for(&mut self, name: &str, shape: &[usize]) -> &mut AdamMoments {
        self.adam
            .entry(name.to_string())
            .or_insert_with(|| AdamMoments::zeros(shape))
    }

    pub(crate) fn velocity_for(&mut self, key: &str, shape: &[usize]) -> &mut Tensor {
        self.velocity
            .entry(key.to_string())
            .or_insert_with(|| Tensor::zeros(shape))
    }
}

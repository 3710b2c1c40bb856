//! Transposed-convolution frame decoder.
//!
//! `[N, D]` codes are projected to `[N, 4b, H/8, W/8]`, then three stride-2
//! transposed convolutions (kernel 4, padding 1) double the spatial extent
//! while the channel count goes `4b -> 2b -> b -> C`. ReLU between layers;
//! the output `tanh` is rescaled into `[0, 1]`.

use rand::Rng;

use super::params::{gaussian, Bound, ParamSet};
use super::ModelConfig;
use crate::error::Result;
use crate::tensor::{Graph, Real, Tensor, Var};

pub const KERNEL: usize = 4;
pub const STRIDE: usize = 2;
pub const PADDING: usize = 1;
const INIT_STD: f64 = 0.02;

/// Channel counts through the stack, input projection first.
fn channels(cfg: &ModelConfig) -> [usize; 4] {
    let b = cfg.base_channels;
    [4 * b, 2 * b, b, cfg.frame.channels]
}

fn projection_len(cfg: &ModelConfig) -> usize {
    channels(cfg)[0] * (cfg.frame.height / 8) * (cfg.frame.width / 8)
}

pub fn init<T: Real>(cfg: &ModelConfig, rng: &mut impl Rng) -> ParamSet<T> {
    let ch = channels(cfg);
    let d = cfg.input_dim();
    let f = projection_len(cfg);
    let mut p = ParamSet::new();
    p.insert("gen.proj.w", gaussian(rng, &[d, f], INIT_STD));
    p.insert("gen.proj.b", Tensor::zeros(&[f]));
    for layer in 0..3 {
        let (ci, co) = (ch[layer], ch[layer + 1]);
        p.insert(
            &format!("gen.tconv{}.w", layer + 1),
            gaussian(rng, &[ci, co, KERNEL, KERNEL], INIT_STD),
        );
        p.insert(&format!("gen.tconv{}.b", layer + 1), Tensor::zeros(&[co]));
    }
    p
}

/// Decode `[N, D]` codes into `[N, C, H, W]` frames.
pub fn forward<T: Real>(g: &mut Graph<T>, params: &Bound, cfg: &ModelConfig, z: Var) -> Result<Var> {
    let ch = channels(cfg);
    let n = g.shape(z)[0];
    let x = g.matmul(z, params.var("gen.proj.w")?)?;
    let x = g.bias_add(x, params.var("gen.proj.b")?, 1)?;
    let x = g.reshape(x, &[n, ch[0], cfg.frame.height / 8, cfg.frame.width / 8])?;
    let mut x = g.relu(x);
    for layer in 1..=3 {
        x = g.conv_transpose2d(x, params.var(&format!("gen.tconv{layer}.w"))?, STRIDE, PADDING)?;
        x = g.bias_add(x, params.var(&format!("gen.tconv{layer}.b"))?, 1)?;
        if layer < 3 {
            x = g.relu(x);
        }
    }
    let x = g.tanh(x);
    let x = g.scale(x, 0.5);
    Ok(g.add_scalar(x, 0.5))
}

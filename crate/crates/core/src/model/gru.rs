//! Single-layer GRU over the transient code sequence, with a linear read-out
//! back to the transient dimension.
//!
//! ```text
//! u_i = σ(x_i W_u + h_{i-1} U_u + b_u)
//! r_i = σ(x_i W_r + h_{i-1} U_r + b_r)
//! c_i = tanh(x_i W_c + (r_i ⊙ h_{i-1}) U_c + b_c)
//! h_i = (1 - u_i) ⊙ h_{i-1} + u_i ⊙ c_i,   h_0 = 0
//! y_i = h_i W_o + b_o
//! ```

use rand::Rng;

use super::params::{gaussian, Bound, ParamSet};
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::tensor::{Graph, Real, Tensor, Var};

const INIT_STD: f64 = 0.02;
const GATES: [&str; 3] = ["update", "reset", "cand"];

pub fn init<T: Real>(cfg: &ModelConfig, rng: &mut impl Rng) -> ParamSet<T> {
    let (d, h) = (cfg.transient_dim, cfg.hidden);
    let mut p = ParamSet::new();
    for gate in GATES {
        p.insert(&format!("rnn.{gate}.wx"), gaussian(rng, &[d, h], INIT_STD));
        p.insert(&format!("rnn.{gate}.wh"), gaussian(rng, &[h, h], INIT_STD));
        p.insert(&format!("rnn.{gate}.b"), Tensor::zeros(&[h]));
    }
    p.insert("rnn.out.w", gaussian(rng, &[h, d], INIT_STD));
    p.insert("rnn.out.b", Tensor::zeros(&[d]));
    p
}

/// Run the recurrence over the rows of `z_t: [L, D_t]` (one row per frame)
/// and return the read-out sequence `[L, D_t]`.
pub fn forward<T: Real>(g: &mut Graph<T>, params: &Bound, cfg: &ModelConfig, z_t: Var) -> Result<Var> {
    let shape = g.shape(z_t).to_vec();
    if shape.len() != 2 || shape[1] != cfg.transient_dim {
        return Err(Error::ShapeMismatch {
            op: "gru",
            left: shape,
            right: vec![0, cfg.transient_dim],
        });
    }
    let steps = shape[0];
    // Input projections for all steps at once.
    let mut xproj = Vec::with_capacity(3);
    for gate in GATES {
        let xp = g.matmul(z_t, params.var(&format!("rnn.{gate}.wx"))?)?;
        xproj.push(g.bias_add(xp, params.var(&format!("rnn.{gate}.b"))?, 1)?);
    }
    let wh_u = params.var("rnn.update.wh")?;
    let wh_r = params.var("rnn.reset.wh")?;
    let wh_c = params.var("rnn.cand.wh")?;

    let mut h = g.constant(Tensor::zeros(&[1, cfg.hidden]));
    let mut hidden = Vec::with_capacity(steps);
    for i in 0..steps {
        let xu = g.gather(xproj[0], &[i])?;
        let xr = g.gather(xproj[1], &[i])?;
        let xc = g.gather(xproj[2], &[i])?;

        let hu = g.matmul(h, wh_u)?;
        let u = g.add(xu, hu)?;
        let u = g.sigmoid(u);

        let hr = g.matmul(h, wh_r)?;
        let r = g.add(xr, hr)?;
        let r = g.sigmoid(r);

        let rh = g.mul(r, h)?;
        let hc = g.matmul(rh, wh_c)?;
        let c = g.add(xc, hc)?;
        let c = g.tanh(c);

        let delta = g.sub(c, h)?;
        let step = g.mul(u, delta)?;
        h = g.add(h, step)?;
        hidden.push(h);
    }
    let hs = g.concat(&hidden, 0)?;
    let y = g.matmul(hs, params.var("rnn.out.w")?)?;
    g.bias_add(y, params.var("rnn.out.b")?, 1)
}

//! Generator and recurrent motion network.

pub mod generator;
pub mod gru;
mod params;

pub(crate) use params::gaussian;
pub use params::{Bound, ParamSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::LatentCode;
use crate::tensor::{Graph, Real, Tensor, Var};
use crate::video::{FrameShape, VideoClip};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Static code length `D_s`.
    pub static_dim: usize,
    /// Transient code length `D_t`.
    pub transient_dim: usize,
    /// Frames per clip `L`.
    pub frames: usize,
    pub frame: FrameShape,
    /// Generator width; the projection has `4 * base_channels` channels.
    pub base_channels: usize,
    /// GRU hidden size.
    pub hidden: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            static_dim: 16,
            transient_dim: 8,
            frames: 8,
            frame: FrameShape::new(3, 16, 16),
            base_channels: 16,
            hidden: 64,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn input_dim(&self) -> usize {
        self.static_dim + self.transient_dim
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.frame;
        let checks = [
            (self.static_dim >= 1, "static_dim must be >= 1"),
            (self.transient_dim >= 1, "transient_dim must be >= 1"),
            (self.frames >= 2, "frames must be >= 2"),
            (f.channels >= 1, "channels must be >= 1"),
            (
                f.height >= 8 && f.height.is_multiple_of(8),
                "height must be a positive multiple of 8",
            ),
            (
                f.width >= 8 && f.width.is_multiple_of(8),
                "width must be a positive multiple of 8",
            ),
            (self.base_channels >= 1, "base_channels must be >= 1"),
            (self.hidden >= 1, "hidden must be >= 1"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::invalid(msg));
            }
        }
        Ok(())
    }
}

/// Generator weights and GRU weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T: Real = f32> {
    pub config: ModelConfig,
    pub generator: ParamSet<T>,
    pub rnn: ParamSet<T>,
}

/// Gaussian(0, 0.02) weights and zero biases, reproducible from `config.seed`.
pub fn init_params<T: Real>(config: &ModelConfig) -> Result<ModelParams<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let generator = generator::init(config, &mut rng);
    let rnn = gru::init(config, &mut rng);
    Ok(ModelParams {
        config: config.clone(),
        generator,
        rnn,
    })
}

impl<T: Real> ModelParams<T> {
    pub fn count(&self) -> usize {
        self.generator.count() + self.rnn.count()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            generator: self.generator.cast(),
            rnn: self.rnn.cast(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.generator.all_finite() && self.rnn.all_finite()
    }
}

/// Record the full video decoder: GRU over `z_t: [L, D_t]`, static code
/// `z_s: [D_s]` repeated per frame, concatenated, decoded to `[L, C, H, W]`.
pub fn video_forward<T: Real>(
    g: &mut Graph<T>,
    cfg: &ModelConfig,
    gen: &Bound,
    rnn: &Bound,
    z_s: Var,
    z_t: Var,
) -> Result<Var> {
    if g.shape(z_s) != [cfg.static_dim] {
        return Err(Error::ShapeMismatch {
            op: "video_forward(static)",
            left: g.shape(z_s).to_vec(),
            right: vec![cfg.static_dim],
        });
    }
    let steps = g.shape(z_t)[0];
    let r = gru::forward(g, rnn, cfg, z_t)?;
    let zs = g.reshape(z_s, &[1, cfg.static_dim])?;
    let zs = g.gather(zs, &vec![0; steps])?;
    let input = g.concat(&[zs, r], 1)?;
    generator::forward(g, gen, cfg, input)
}

/// GRU read-out for a transient matrix stored frame-major (`[L, D_t]`).
pub fn gru_sequence(params: &ModelParams, z_t: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let rnn = params.rnn.bind(&mut g, false)?;
    let z = g.constant(z_t.clone());
    let r = gru::forward(&mut g, &rnn, &params.config, z)?;
    Ok(g.value(r).clone())
}

/// Decode one frame from a static code and a (recurrent) transient code.
pub fn generate_frame(params: &ModelParams, z_s: &[f32], r_i: &[f32]) -> Result<Tensor> {
    let cfg = &params.config;
    if z_s.len() != cfg.static_dim || r_i.len() != cfg.transient_dim {
        return Err(Error::ShapeMismatch {
            op: "generate_frame",
            left: vec![z_s.len(), r_i.len()],
            right: vec![cfg.static_dim, cfg.transient_dim],
        });
    }
    let mut input = z_s.to_vec();
    input.extend_from_slice(r_i);
    let mut g = Graph::new();
    let gen = params.generator.bind(&mut g, false)?;
    let z = g.constant(Tensor::new(&[1, cfg.input_dim()], input)?);
    let out = generator::forward(&mut g, &gen, cfg, z)?;
    Ok(g.value(out).index_outer(0))
}

/// Frame `i` is `G([z_s; R(z_t)_i])`. The code may have any number of frames.
pub fn generate_video(params: &ModelParams, code: &LatentCode) -> Result<VideoClip> {
    let cfg = &params.config;
    if code.static_dim() != cfg.static_dim || code.transient_dim() != cfg.transient_dim {
        return Err(Error::ShapeMismatch {
            op: "generate_video",
            left: vec![code.static_dim(), code.transient_dim()],
            right: vec![cfg.static_dim, cfg.transient_dim],
        });
    }
    let mut g = Graph::new();
    let gen = params.generator.bind(&mut g, false)?;
    let rnn = params.rnn.bind(&mut g, false)?;
    let zs = g.constant(Tensor::new(&[cfg.static_dim], code.static_code().to_vec())?);
    let zt = g.constant(code.transient().clone());
    let out = video_forward(&mut g, cfg, &gen, &rnn, zs, zt)?;
    VideoClip::from_tensor(g.value(out).clone())
}

/// Frames generated from transient codes interpolated between frames `a` and
/// `b` (1-based, `a < b`) of `z_t`.
///
/// The GRU runs over frames `1..=a` followed by the `k` interpolants, so the
/// `n`-th output frame occupies time step `a + n`, the place of the frame it
/// stands in for.
pub fn interpolate_frames(
    params: &ModelParams,
    z_s: &[f32],
    z_t: &Tensor,
    a: usize,
    b: usize,
    k: usize,
) -> Result<VideoClip> {
    let frames = z_t.shape()[0];
    if a == 0 || b > frames || a >= b {
        return Err(Error::invalid(format!(
            "need 1 <= from < to <= {frames}, got from {a}, to {b}"
        )));
    }
    let steps = crate::latent::interpolate_transient(z_t.row(a - 1), z_t.row(b - 1), k)?;
    let d_t = z_t.shape()[1];
    let mut data = z_t.data()[..a * d_t].to_vec();
    for s in &steps {
        data.extend_from_slice(s);
    }
    let code = LatentCode::new(z_s.to_vec(), Tensor::new(&[a + k, d_t], data)?)?;
    let clip = generate_video(params, &code)?;
    let tail: Vec<Tensor> = (a..a + k).map(|i| clip.frame(i)).collect();
    VideoClip::from_frames(&tail)
}

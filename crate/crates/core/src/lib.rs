//! Non-adversarial video synthesis from learned latent priors.
//!
//! A video is generated from one static code (appearance) and a sequence of
//! transient codes (motion). The transient sequence is run through a GRU and
//! each output, concatenated with the static code, is decoded into a frame by
//! a transposed-convolution generator. Generator weights, GRU weights, and the
//! latent dictionary itself are all optimized against a Laplacian-pyramid
//! reconstruction loss, with an extra single-frame term and a triplet term on
//! the transient codes.

mod binio;
pub mod error;
pub mod latent;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod synthdata;
pub mod tensor;
pub mod trainer;
pub mod video;

pub use error::{Error, Result};
pub use latent::{LatentCode, LatentDictionary, LatentDims, SharingScheme, VideoLabels};
pub use model::{ModelConfig, ModelParams};
pub use tensor::{GradMap, Graph, ParamId, Real, Tensor, Var};
pub use video::{FrameShape, VideoClip};

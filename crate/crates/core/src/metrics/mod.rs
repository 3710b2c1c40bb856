//! Motion and frame consistency scores.
//!
//! Frame features come from a fixed random two-layer convolutional network,
//! so scores are only meaningful relative to each other under one seed.

mod ssim;

pub use ssim::{ssim, SSIM_WINDOW};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamSet;
use crate::tensor::{Graph, Tensor};
use crate::video::VideoClip;

/// Floor applied to the squared distance before taking `log10`.
pub const MCS_EPS: f64 = 1e-12;

/// Random conv(3→16, k3, s2, p1) → ReLU → conv(16→32, k3, s2, p1) → ReLU,
/// flattened. Weights are He-normal and depend only on the seed.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureExtractor {
    pub seed: u64,
    pub in_channels: usize,
    w1: Tensor,
    w2: Tensor,
}

impl FeatureExtractor {
    pub const HIDDEN: usize = 16;
    pub const OUT: usize = 32;

    pub fn new(seed: u64, in_channels: usize) -> Result<Self> {
        if in_channels == 0 {
            return Err(Error::invalid("extractor needs at least one input channel"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let he = |fan_in: usize| (2.0 / fan_in as f64).sqrt();
        let w1 = crate::model::gaussian(&mut rng, &[Self::HIDDEN, in_channels, 3, 3], he(in_channels * 9));
        let w2 = crate::model::gaussian(&mut rng, &[Self::OUT, Self::HIDDEN, 3, 3], he(Self::HIDDEN * 9));
        Ok(FeatureExtractor {
            seed,
            in_channels,
            w1,
            w2,
        })
    }

    /// Features of every frame of a `[L, C, H, W]` clip, one row per frame.
    pub fn features(&self, clip: &VideoClip) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(clip.tensor().clone());
        let w1 = g.constant(self.w1.clone());
        let w2 = g.constant(self.w2.clone());
        let h = g.conv2d(x, w1, 2, 1)?;
        let h = g.relu(h);
        let h = g.conv2d(h, w2, 2, 1)?;
        let h = g.relu(h);
        let out = g.value(h);
        let rows = out.shape()[0];
        out.reshape(&[rows, out.len() / rows])
    }

    /// Weights, for inspection.
    pub fn weights(&self) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("conv1.w", self.w1.clone());
        p.insert("conv2.w", self.w2.clone());
        p
    }
}

/// Mean over all (video, step) pairs of consecutive frame-feature differences.
pub fn motion_summary(videos: &[VideoClip], ext: &FeatureExtractor) -> Result<Vec<f64>> {
    if videos.is_empty() {
        return Err(Error::invalid("motion summary needs at least one video"));
    }
    let mut sum: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for v in videos {
        if v.len() < 2 {
            return Err(Error::invalid("motion summary needs at least two frames per video"));
        }
        let f = ext.features(v)?;
        if sum.is_empty() {
            sum = vec![0.0; f.shape()[1]];
        } else if sum.len() != f.shape()[1] {
            return Err(Error::ShapeMismatch {
                op: "motion_summary",
                left: vec![sum.len()],
                right: vec![f.shape()[1]],
            });
        }
        for i in 0..v.len() - 1 {
            for ((s, &a), &b) in sum.iter_mut().zip(f.row(i)).zip(f.row(i + 1)) {
                *s += b as f64 - a as f64;
            }
            count += 1;
        }
    }
    Ok(sum.into_iter().map(|s| s / count as f64).collect())
}

/// `log10(max(‖f − f̂‖², 1e-12))` over motion summaries.
pub fn mcs(real: &[VideoClip], gen: &[VideoClip], ext: &FeatureExtractor) -> Result<f64> {
    mcs_from_summaries(&motion_summary(real, ext)?, &motion_summary(gen, ext)?)
}

/// The score for two precomputed motion summaries.
pub fn mcs_from_summaries(f: &[f64], g: &[f64]) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::ShapeMismatch {
            op: "mcs",
            left: vec![f.len()],
            right: vec![g.len()],
        });
    }
    let d2: f64 = f.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(d2.max(MCS_EPS).log10())
}

/// Per-video SSIM of frames `2..=L` against frame 1.
pub fn ssim_trace(video: &VideoClip) -> Result<Vec<f64>> {
    if video.len() < 2 {
        return Err(Error::invalid("frame consistency needs at least two frames"));
    }
    let first = video.frame(0);
    (1..video.len()).map(|i| ssim(&first, &video.frame(i))).collect()
}

/// Mean SSIM over corresponding frames of two equally shaped clips.
pub fn clip_ssim(a: &VideoClip, b: &VideoClip) -> Result<f64> {
    if a.tensor().shape() != b.tensor().shape() {
        return Err(Error::ShapeMismatch {
            op: "clip_ssim",
            left: a.tensor().shape().to_vec(),
            right: b.tensor().shape().to_vec(),
        });
    }
    let mut total = 0.0;
    for i in 0..a.len() {
        total += ssim(&a.frame(i), &b.frame(i))?;
    }
    Ok(total / a.len() as f64)
}

/// Mean over videos of the mean SSIM trace.
pub fn fcs(videos: &[VideoClip]) -> Result<f64> {
    Ok(fcs_with_traces(videos)?.0)
}

pub fn fcs_with_traces(videos: &[VideoClip]) -> Result<(f64, Vec<Vec<f64>>)> {
    if videos.is_empty() {
        return Err(Error::invalid("frame consistency needs at least one video"));
    }
    let traces = videos.iter().map(ssim_trace).collect::<Result<Vec<_>>>()?;
    let mean = traces
        .iter()
        .map(|t| t.iter().sum::<f64>() / t.len() as f64)
        .sum::<f64>()
        / traces.len() as f64;
    Ok((mean, traces))
}

/// Scores of a generated set against a real one. Only the five scalar
/// fields are serialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mcs: f64,
    pub fcs: f64,
    pub n_real: usize,
    pub n_gen: usize,
    pub extractor_seed: u64,
    #[serde(skip)]
    pub ssim_traces: Vec<Vec<f64>>,
}

pub fn evaluate(real: &[VideoClip], gen: &[VideoClip], extractor_seed: u64) -> Result<MetricsReport> {
    if real.is_empty() || gen.is_empty() {
        return Err(Error::invalid(format!(
            "both sets need at least one video, got {} real and {} generated",
            real.len(),
            gen.len()
        )));
    }
    let shape = |v: &[VideoClip]| v.first().map(|c| c.tensor().shape()[1..].to_vec());
    if shape(real) != shape(gen) {
        return Err(Error::ShapeMismatch {
            op: "evaluate",
            left: shape(real).unwrap_or_default(),
            right: shape(gen).unwrap_or_default(),
        });
    }
    let channels = real[0].frame_shape().channels;
    let ext = FeatureExtractor::new(extractor_seed, channels)?;
    let (fcs, ssim_traces) = fcs_with_traces(gen)?;
    Ok(MetricsReport {
        mcs: mcs(real, gen, &ext)?,
        fcs,
        n_real: real.len(),
        n_gen: gen.len(),
        extractor_seed,
        ssim_traces,
    })
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Channel count and spatial extent of one frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl FrameShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        FrameShape {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }
}

/// An ordered sequence of frames stored as one `[L, C, H, W]` tensor with
/// values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoClip {
    frames: Tensor,
}

impl VideoClip {
    pub fn from_tensor(frames: Tensor) -> Result<Self> {
        if frames.rank() != 4 {
            return Err(Error::invalid(format!(
                "video tensor must be [L, C, H, W], got {:?}",
                frames.shape()
            )));
        }
        Ok(VideoClip { frames })
    }

    pub fn from_frames(frames: &[Tensor]) -> Result<Self> {
        for f in frames {
            if f.rank() != 3 {
                return Err(Error::invalid(format!("frame must be [C, H, W], got {:?}", f.shape())));
            }
        }
        Self::from_tensor(Tensor::stack(frames)?)
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame_shape(&self) -> FrameShape {
        let s = self.frames.shape();
        FrameShape::new(s[1], s[2], s[3])
    }

    pub fn tensor(&self) -> &Tensor {
        &self.frames
    }

    pub fn into_tensor(self) -> Tensor {
        self.frames
    }

    /// Frame `i` (0-based) as a `[C, H, W]` tensor.
    pub fn frame(&self, i: usize) -> Tensor {
        self.frames.index_outer(i)
    }

    pub fn frame_data(&self, i: usize) -> &[f32] {
        let n = self.frame_shape().len();
        &self.frames.data()[i * n..(i + 1) * n]
    }

    pub fn frames(&self) -> impl Iterator<Item = Tensor> + '_ {
        (0..self.len()).map(|i| self.frame(i))
    }

    pub fn mean_abs_diff(&self, other: &VideoClip) -> Result<f64> {
        self.frames.expect_same_shape(&other.frames, "mean_abs_diff")?;
        let n = self.frames.len() as f64;
        Ok(self
            .frames
            .data()
            .iter()
            .zip(other.frames.data())
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .sum::<f64>()
            / n)
    }
}

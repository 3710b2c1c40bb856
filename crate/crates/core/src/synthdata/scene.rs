//! Moving-shape scenes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::video::VideoClip;

pub const BACKGROUND: f32 = 0.1;
const SUPERSAMPLE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    Square,
    Disk,
    Triangle,
}

/// Appearance of a scene.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Identity {
    pub shape: ShapeKind,
    pub color: [f32; 3],
    /// Side length or diameter in pixels.
    pub size: f32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionPattern {
    HorizontalBounce,
    VerticalBounce,
    Diagonal,
    Circular,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    pub pattern: MotionPattern,
    /// Pixels per frame (arc length for circular motion).
    pub speed: f32,
    /// Offset along the path in pixels at frame 0.
    pub phase: f32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub identity: Identity,
    pub motion: Motion,
}

/// Fold `s` into `[0, len]` as a bouncing coordinate.
fn bounce(s: f64, len: f64) -> f64 {
    if len <= 0.0 {
        return 0.0;
    }
    let m = s.rem_euclid(2.0 * len);
    if m <= len {
        m
    } else {
        2.0 * len - m
    }
}

impl SceneSpec {
    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        let id = &self.identity;
        let m = &self.motion;
        let limit = height.min(width) as f32 - 2.0;
        if !(id.size > 0.0 && id.size <= limit) {
            return Err(Error::invalid(format!(
                "shape size {} does not fit a {height}x{width} frame (max {limit})",
                id.size
            )));
        }
        if id.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid(format!("color {:?} outside [0, 1]", id.color)));
        }
        if !(m.speed >= 0.0 && m.speed.is_finite() && m.phase.is_finite()) {
            return Err(Error::invalid(format!(
                "motion speed {} / phase {} must be finite, speed >= 0",
                m.speed, m.phase
            )));
        }
        Ok(())
    }

    /// Shape center at frame `t`, in pixel coordinates where pixel `i` spans
    /// `[i, i + 1)`.
    pub fn center(&self, t: usize, height: usize, width: usize) -> (f64, f64) {
        let r = self.identity.size as f64 / 2.0;
        let (h, w) = (height as f64, width as f64);
        let s = self.motion.phase as f64 + self.motion.speed as f64 * t as f64;
        let (rx, ry) = (w - 2.0 * r, h - 2.0 * r);
        match self.motion.pattern {
            MotionPattern::HorizontalBounce => (r + bounce(s, rx), h / 2.0),
            MotionPattern::VerticalBounce => (w / 2.0, r + bounce(s, ry)),
            MotionPattern::Diagonal => (r + bounce(s, rx), r + bounce(s, ry)),
            MotionPattern::Circular => {
                let radius = (rx.min(ry) / 2.0).max(0.0);
                let theta = if radius > 0.0 { s / radius } else { 0.0 };
                (w / 2.0 + radius * theta.cos(), h / 2.0 + radius * theta.sin())
            }
        }
    }

    fn covers(&self, dx: f64, dy: f64) -> bool {
        let r = self.identity.size as f64 / 2.0;
        match self.identity.shape {
            ShapeKind::Square => dx.abs() <= r && dy.abs() <= r,
            ShapeKind::Disk => dx * dx + dy * dy <= r * r,
            // Apex up, base along y = +r.
            ShapeKind::Triangle => dy.abs() <= r && dx.abs() <= (dy + r) / 2.0,
        }
    }
}

/// Anti-aliased rendering with `SUPERSAMPLE²` samples per pixel on a gray
/// background. One channel renders the mean of the color.
pub fn render_video(
    spec: &SceneSpec,
    frames: usize,
    channels: usize,
    height: usize,
    width: usize,
) -> Result<VideoClip> {
    if frames == 0 || channels == 0 {
        return Err(Error::invalid("render needs at least one frame and channel"));
    }
    spec.validate(height, width)?;
    let color: Vec<f32> = if channels == 1 {
        vec![spec.identity.color.iter().sum::<f32>() / 3.0]
    } else {
        (0..channels).map(|c| spec.identity.color[c % 3]).collect()
    };
    let plane = height * width;
    let mut data = Vec::with_capacity(frames * channels * plane);
    let step = 1.0 / SUPERSAMPLE as f64;
    let total = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    for t in 0..frames {
        let (cx, cy) = spec.center(t, height, width);
        let mut cover = vec![0.0f64; plane];
        for y in 0..height {
            for x in 0..width {
                let mut hits = 0usize;
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let px = x as f64 + (sx as f64 + 0.5) * step;
                        let py = y as f64 + (sy as f64 + 0.5) * step;
                        if spec.covers(px - cx, py - cy) {
                            hits += 1;
                        }
                    }
                }
                cover[y * width + x] = hits as f64 / total;
            }
        }
        for &c in &color {
            data.extend(
                cover
                    .iter()
                    .map(|&a| (BACKGROUND as f64 * (1.0 - a) + c as f64 * a) as f32),
            );
        }
    }
    VideoClip::from_tensor(Tensor::new(&[frames, channels, height, width], data)?)
}

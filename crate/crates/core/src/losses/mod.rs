//! Reconstruction, single-frame and triplet losses.

mod pyramid;
mod triplet;

pub use pyramid::{collapse_pyramid, lap1_graph, lap1_loss, laplacian_pyramid, level_weight};
pub use triplet::{sample_triplets, sample_triplets_with, triplet_graph, triplet_loss, valid_anchors, TripletIndices};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Real, Tensor, Var};
use crate::video::VideoClip;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Weight of the single-frame term.
    pub lambda_static: f64,
    /// Weight of the triplet term.
    pub lambda_triplet: f64,
    /// Triplet margin α.
    pub margin: f64,
    /// Pyramid depth.
    pub levels: usize,
    /// Frames within this distance of the anchor are positives; farther ones
    /// are negatives.
    pub window: usize,
    /// Triplets sampled per step.
    pub triplets: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_static: 0.01,
            lambda_triplet: 0.01,
            margin: 2.0,
            levels: 3,
            window: 2,
            triplets: 8,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |c: bool, msg: &str| if c { Ok(()) } else { Err(Error::invalid(msg)) };
        ok(
            self.lambda_static >= 0.0 && self.lambda_static.is_finite(),
            "lambda_static must be >= 0",
        )?;
        ok(
            self.lambda_triplet >= 0.0 && self.lambda_triplet.is_finite(),
            "lambda_triplet must be >= 0",
        )?;
        ok(self.margin > 0.0 && self.margin.is_finite(), "margin must be > 0")?;
        ok(self.levels >= 1, "levels must be >= 1")?;
        ok(self.window >= 1, "window must be >= 1")?;
        ok(self.triplets >= 1, "triplets must be >= 1")
    }

    /// Checks that depend on the clip geometry.
    pub fn validate_for(&self, frames: usize, height: usize, width: usize) -> Result<()> {
        self.validate()?;
        if self.window >= frames {
            return Err(Error::invalid(format!(
                "window {} must be smaller than the clip length {frames}",
                self.window
            )));
        }
        if self.lambda_triplet > 0.0 && valid_anchors(frames, self.window).is_empty() {
            return Err(Error::invalid(format!(
                "no frame of a {frames}-frame clip has a negative farther than {} frames away; \
                 set lambda_triplet to 0 or shrink the window",
                self.window
            )));
        }
        pyramid::check_levels(&[height, width], self.levels)
    }
}

fn expect_same_clip(v: &VideoClip, v_hat: &VideoClip, op: &'static str) -> Result<()> {
    if v.tensor().shape() != v_hat.tensor().shape() {
        return Err(Error::ShapeMismatch {
            op,
            left: v.tensor().shape().to_vec(),
            right: v_hat.tensor().shape().to_vec(),
        });
    }
    Ok(())
}

/// Mean over frames of [`lap1_loss`].
pub fn reconstruction_loss(v: &VideoClip, v_hat: &VideoClip, levels: usize) -> Result<f64> {
    expect_same_clip(v, v_hat, "reconstruction_loss")?;
    lap1_loss(v.tensor(), v_hat.tensor(), levels)
}

/// [`lap1_loss`] on frame `k` (1-based).
pub fn static_loss(v: &VideoClip, v_hat: &VideoClip, k: usize, levels: usize) -> Result<f64> {
    expect_same_clip(v, v_hat, "static_loss")?;
    if k == 0 || k > v.len() {
        return Err(Error::invalid(format!("frame index {k} outside 1..={}", v.len())));
    }
    lap1_loss(&v.frame(k - 1), &v_hat.frame(k - 1), levels)
}

/// Unweighted loss terms and the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub rec: f64,
    pub static_term: f64,
    pub triplet: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn combine(rec: f64, static_term: f64, triplet: f64, cfg: &LossConfig) -> Self {
        LossBreakdown {
            rec,
            static_term,
            triplet,
            total: rec + cfg.lambda_static * static_term + cfg.lambda_triplet * triplet,
        }
    }

    /// `(rec, λ_s·static, λ_t·triplet, total)`, as logged per epoch.
    pub fn weighted(&self, cfg: &LossConfig) -> [f64; 4] {
        [
            self.rec,
            cfg.lambda_static * self.static_term,
            cfg.lambda_triplet * self.triplet,
            self.total,
        ]
    }
}

/// Nodes of the full objective on a tape.
#[derive(Clone, Copy, Debug)]
pub struct ObjectiveVars {
    pub rec: Var,
    pub static_term: Var,
    pub triplet: Var,
    pub total: Var,
}

impl ObjectiveVars {
    pub fn breakdown<T: Real>(&self, g: &Graph<T>) -> LossBreakdown {
        let v = |x: Var| g.value(x).item().as_f64();
        LossBreakdown {
            rec: v(self.rec),
            static_term: v(self.static_term),
            triplet: v(self.triplet),
            total: v(self.total),
        }
    }
}

/// Record `ℓ_rec + λ_s ℓ_static + λ_t ℓ_triplet`. An empty triple set
/// contributes a zero triplet term.
///
/// `video` and `target` are `[L, C, H, W]`, `z_t` is `[L, D_t]` and `k` is the
/// 1-based frame of the single-frame term.
pub fn objective_graph<T: Real>(
    g: &mut Graph<T>,
    video: Var,
    target: Var,
    z_t: Var,
    k: usize,
    triples: &TripletIndices,
    cfg: &LossConfig,
) -> Result<ObjectiveVars> {
    if g.shape(video) != g.shape(target) {
        return Err(Error::ShapeMismatch {
            op: "objective",
            left: g.shape(video).to_vec(),
            right: g.shape(target).to_vec(),
        });
    }
    let frames = g.shape(video)[0];
    if k == 0 || k > frames {
        return Err(Error::invalid(format!("frame index {k} outside 1..={frames}")));
    }
    let rec = lap1_graph(g, video, target, cfg.levels)?;
    let vk = g.gather(video, &[k - 1])?;
    let tk = g.gather(target, &[k - 1])?;
    let static_term = lap1_graph(g, vk, tk, cfg.levels)?;
    let triplet = if triples.is_empty() {
        g.constant(Tensor::scalar(T::zero()))
    } else {
        triplet_graph(g, z_t, triples, cfg.margin)?
    };
    let ws = g.scale(static_term, cfg.lambda_static);
    let wt = g.scale(triplet, cfg.lambda_triplet);
    let total = g.add(rec, ws)?;
    let total = g.add(total, wt)?;
    Ok(ObjectiveVars {
        rec,
        static_term,
        triplet,
        total,
    })
}

/// Value of the full objective with its breakdown.
pub fn total_loss(
    v: &VideoClip,
    v_hat: &VideoClip,
    z_t: &Tensor,
    k: usize,
    triples: &TripletIndices,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    expect_same_clip(v, v_hat, "total_loss")?;
    let rec = reconstruction_loss(v, v_hat, cfg.levels)?;
    let stat = static_loss(v, v_hat, k, cfg.levels)?;
    let trip = triplet_loss(z_t, triples, cfg.margin)?;
    Ok(LossBreakdown::combine(rec, stat, trip, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(shape: &[usize], c: f32) -> Tensor {
        Tensor::full(shape, c)
    }

    #[test]
    fn single_level_pyramid_is_identity() {
        let x = Tensor::new(&[2, 4], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        assert_eq!(laplacian_pyramid(&x, 1).unwrap(), vec![x]);
    }

    #[test]
    fn constant_image_has_zero_residuals() {
        let x = constant(&[3, 16, 16], 0.3);
        let bands = laplacian_pyramid(&x, 3).unwrap();
        for b in &bands[..2] {
            assert!(b.data().iter().all(|v| v.abs() < 1e-6));
        }
        assert_eq!(bands[2].shape(), &[3, 4, 4]);
        assert!(bands[2].data().iter().all(|v| (v - 0.3).abs() < 1e-6));
    }

    #[test]
    fn indivisible_extent_rejected() {
        let x = constant(&[12, 12], 0.0);
        assert!(laplacian_pyramid(&x, 3).is_ok());
        assert!(laplacian_pyramid(&x, 4).is_err());
    }

    #[test]
    fn lap1_constant_pair_only_coarse_band() {
        let l = lap1_loss(&constant(&[8, 8], 0.2), &constant(&[8, 8], 0.7), 2).unwrap();
        assert!((l - 16.0 * 0.5).abs() < 1e-5, "{l}");
        assert_eq!(
            lap1_loss(&constant(&[8, 8], 0.2), &constant(&[8, 8], 0.2), 2).unwrap(),
            0.0
        );
    }

    #[test]
    fn triplet_examples() {
        let z = Tensor::new(&[3, 2], vec![0.0, 0.0, 1.0, 0.0, 3.0, 0.0]).unwrap();
        let t = TripletIndices {
            triples: vec![(1, 2, 3)],
        };
        assert_eq!(triplet_loss(&z, &t, 2.0).unwrap(), 0.0);
        let same = Tensor::new(&[3, 2], vec![0.5; 6]).unwrap();
        assert!((triplet_loss(&same, &t, 2.0).unwrap() - 2.0).abs() < 1e-12);
        // ‖a-n‖² = α exactly: hinge boundary.
        let edge = Tensor::new(&[3, 1], vec![0.0, 0.0, 2.0]).unwrap();
        assert_eq!(triplet_loss(&edge, &t, 4.0).unwrap(), 0.0);
    }

    #[test]
    fn breakdown_arithmetic() {
        let b = LossBreakdown::combine(0.5, 0.2, 1.0, &LossConfig::default());
        assert!((b.total - 0.512).abs() < 1e-12);
    }

    #[test]
    fn config_rules() {
        assert!(LossConfig::default().validate_for(8, 16, 16).is_ok());
        let c = LossConfig {
            margin: 0.0,
            ..LossConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(LossConfig::default().validate_for(2, 16, 16).is_err());
        let deep = LossConfig {
            levels: 6,
            ..LossConfig::default()
        };
        assert!(deep.validate_for(8, 16, 16).is_err());
    }

    #[test]
    fn sampling_is_reproducible_and_valid() {
        let a = sample_triplets(16, 2, 32, 9).unwrap();
        assert_eq!(a, sample_triplets(16, 2, 32, 9).unwrap());
        assert!(a.is_valid(16, 2));
        assert!(sample_triplets(3, 2, 4, 0).is_err());
    }
}

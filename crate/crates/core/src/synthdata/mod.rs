//! Synthetic identity × motion video grids, the NAVS container, and image
//! export.

mod container;
mod export;
mod scene;

pub use container::{decode_navs, encode_navs, read_navs, write_navs};
pub use export::{export_gif, export_png, quantize};
pub use scene::{render_video, Identity, Motion, MotionPattern, SceneSpec, ShapeKind, BACKGROUND};

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::VideoLabels;
use crate::video::VideoClip;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            frames: 8,
            channels: 3,
            height: 16,
            width: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub video: String,
    pub identity: String,
    pub motion: String,
    pub held_out: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedIdentity {
    pub name: String,
    pub spec: Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedMotion {
    pub name: String,
    pub spec: Motion,
}

/// Scene descriptions that let any cell be re-rendered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneCatalog {
    pub identities: Vec<NamedIdentity>,
    pub motions: Vec<NamedMotion>,
}

/// Every cell of the grid in row-major (identity, motion) order. Training
/// clips in the companion NAVS file follow the same order, skipping
/// held-out cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub geometry: Geometry,
    pub seed: u64,
    /// Absent for datasets that were not synthesized here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenes: Option<SceneCatalog>,
}

impl DatasetManifest {
    pub fn training_entries(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| !e.held_out)
    }

    pub fn held_out_entries(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.held_out)
    }

    pub fn training_labels(&self) -> Vec<VideoLabels> {
        self.training_entries()
            .map(|e| VideoLabels::new(&e.video, &e.identity, &e.motion))
            .collect()
    }

    pub fn is_synthetic(&self) -> bool {
        self.scenes.is_some()
    }

    /// Ground truth for any cell of a synthetic grid.
    pub fn render_cell(&self, identity: &str, motion: &str) -> Result<VideoClip> {
        let scenes = self
            .scenes
            .as_ref()
            .ok_or_else(|| Error::invalid("manifest has no scene descriptions"))?;
        let id = scenes
            .identities
            .iter()
            .find(|i| i.name == identity)
            .ok_or_else(|| Error::UnknownName(identity.to_string()))?;
        let m = scenes
            .motions
            .iter()
            .find(|m| m.name == motion)
            .ok_or_else(|| Error::UnknownName(motion.to_string()))?;
        let g = self.geometry;
        let spec = SceneSpec {
            identity: id.spec,
            motion: m.spec,
        };
        render_video(&spec, g.frames, g.channels, g.height, g.width)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

const PALETTE: [[f32; 3]; 6] = [
    [0.95, 0.35, 0.30],
    [0.30, 0.80, 0.95],
    [0.95, 0.90, 0.30],
    [0.45, 0.95, 0.45],
    [0.90, 0.45, 0.95],
    [0.95, 0.95, 0.95],
];

/// `n` distinct identities `P1..Pn`: shapes cycle square, disk, triangle and
/// colors cycle a fixed bright palette. All share one size so a motion
/// traces the same path for every identity.
pub fn default_identities(n: usize, height: usize, width: usize) -> Vec<NamedIdentity> {
    let shapes = [ShapeKind::Square, ShapeKind::Disk, ShapeKind::Triangle];
    let size = (height.min(width) as f32 * 0.375).round().max(1.0);
    (0..n)
        .map(|i| NamedIdentity {
            name: format!("P{}", i + 1),
            spec: Identity {
                shape: shapes[i % 3],
                color: PALETTE[(i + i / 3) % PALETTE.len()],
                size,
            },
        })
        .collect()
}

/// `m` motions `A1..Am` cycling the four patterns, with speeds growing every
/// full cycle and seed-dependent phases.
pub fn default_motions(m: usize, seed: u64) -> Vec<NamedMotion> {
    let patterns = [
        MotionPattern::HorizontalBounce,
        MotionPattern::VerticalBounce,
        MotionPattern::Diagonal,
        MotionPattern::Circular,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|j| NamedMotion {
            name: format!("A{}", j + 1),
            spec: Motion {
                pattern: patterns[j % 4],
                speed: 1.0 + 0.5 * (j / 4) as f32,
                phase: rng.random_range(0.0f32..4.0).round(),
            },
        })
        .collect()
}

/// Parse `"i:j,i:j"` (0-based identity and motion indices).
pub fn parse_holdout(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let (i, j) = p
                .split_once(':')
                .ok_or_else(|| Error::invalid(format!("holdout cell `{p}` is not `i:j`")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::invalid(format!("bad holdout index in `{p}`")))
            };
            Ok((parse(i)?, parse(j)?))
        })
        .collect()
}

/// Render every non-held-out cell of the identity × motion grid.
pub fn build_matrix_dataset(
    identities: &[NamedIdentity],
    motions: &[NamedMotion],
    holdout: &[(usize, usize)],
    geometry: Geometry,
    seed: u64,
) -> Result<(DatasetManifest, Vec<VideoClip>)> {
    let (ni, nm) = (identities.len(), motions.len());
    if ni == 0 || nm == 0 {
        return Err(Error::invalid("need at least one identity and one motion"));
    }
    for (k, &(i, j)) in holdout.iter().enumerate() {
        if i >= ni || j >= nm {
            return Err(Error::invalid(format!(
                "holdout cell {i}:{j} outside the {ni}x{nm} grid"
            )));
        }
        if holdout[..k].contains(&(i, j)) {
            return Err(Error::invalid(format!("holdout cell {i}:{j} listed twice")));
        }
    }
    for i in 0..ni {
        if (0..nm).all(|j| holdout.contains(&(i, j))) {
            return Err(Error::invalid(format!(
                "holdout covers every motion of identity {i}; it could never be learned"
            )));
        }
    }
    for j in 0..nm {
        if (0..ni).all(|i| holdout.contains(&(i, j))) {
            return Err(Error::invalid(format!(
                "holdout covers every identity of motion {j}; it could never be learned"
            )));
        }
    }
    let mut entries = Vec::with_capacity(ni * nm);
    let mut clips = Vec::new();
    for (i, id) in identities.iter().enumerate() {
        for (j, m) in motions.iter().enumerate() {
            let held_out = holdout.contains(&(i, j));
            let spec = SceneSpec {
                identity: id.spec,
                motion: m.spec,
            };
            spec.validate(geometry.height, geometry.width)?;
            if !held_out {
                clips.push(render_video(
                    &spec,
                    geometry.frames,
                    geometry.channels,
                    geometry.height,
                    geometry.width,
                )?);
            }
            entries.push(ManifestEntry {
                video: format!("{}_{}", id.name, m.name),
                identity: id.name.clone(),
                motion: m.name.clone(),
                held_out,
            });
        }
    }
    let manifest = DatasetManifest {
        entries,
        geometry,
        seed,
        scenes: Some(SceneCatalog {
            identities: identities.to_vec(),
            motions: motions.to_vec(),
        }),
    };
    Ok((manifest, clips))
}

/// [`build_matrix_dataset`] over [`default_identities`] and [`default_motions`].
pub fn default_matrix_dataset(
    identities: usize,
    motions: usize,
    holdout: &[(usize, usize)],
    geometry: Geometry,
    seed: u64,
) -> Result<(DatasetManifest, Vec<VideoClip>)> {
    let ids = default_identities(identities, geometry.height, geometry.width);
    let ms = default_motions(motions, seed);
    build_matrix_dataset(&ids, &ms, holdout, geometry, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(pattern: MotionPattern, speed: f32) -> SceneSpec {
        SceneSpec {
            identity: Identity {
                shape: ShapeKind::Square,
                color: [0.9, 0.9, 0.9],
                size: 4.0,
            },
            motion: Motion {
                pattern,
                speed,
                phase: 0.0,
            },
        }
    }

    fn centroid_x(frame: &[f32], h: usize, w: usize) -> f64 {
        let (mut m, mut mx) = (0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                let a = (frame[y * w + x] - BACKGROUND) as f64;
                m += a;
                mx += a * (x as f64 + 0.5);
            }
        }
        mx / m
    }

    #[test]
    fn zero_speed_is_static() {
        let v = render_video(&spec(MotionPattern::Circular, 0.0), 5, 3, 16, 16).unwrap();
        for i in 1..5 {
            assert_eq!(v.frame_data(i), v.frame_data(0));
        }
    }

    #[test]
    fn horizontal_bounce_advances_one_pixel() {
        let v = render_video(&spec(MotionPattern::HorizontalBounce, 1.0), 4, 1, 16, 16).unwrap();
        let xs: Vec<f64> = (0..4).map(|i| centroid_x(v.frame_data(i), 16, 16)).collect();
        for k in 1..4 {
            assert!((xs[k] - xs[k - 1] - 1.0).abs() < 1e-6, "{xs:?}");
        }
    }

    #[test]
    fn pixel_range_and_determinism() {
        let s = spec(MotionPattern::Diagonal, 1.5);
        let a = render_video(&s, 6, 3, 16, 16).unwrap();
        assert_eq!(a, render_video(&s, 6, 3, 16, 16).unwrap());
        assert!(a.tensor().data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn oversized_shape_rejected() {
        let mut s = spec(MotionPattern::Diagonal, 1.0);
        s.identity.size = 15.0;
        assert!(render_video(&s, 2, 3, 16, 16).is_err());
    }

    #[test]
    fn grid_counts() {
        let g = Geometry::default();
        let (m, clips) = default_matrix_dataset(3, 3, &[(0, 1), (2, 2)], g, 0).unwrap();
        assert_eq!(clips.len(), 7);
        assert_eq!(m.held_out_entries().count(), 2);
        let (_, clips) = default_matrix_dataset(3, 3, &[], g, 0).unwrap();
        assert_eq!(clips.len(), 9);
    }

    #[test]
    fn full_row_or_column_rejected() {
        let g = Geometry::default();
        assert!(default_matrix_dataset(3, 3, &[(1, 0), (1, 1), (1, 2)], g, 0).is_err());
        assert!(default_matrix_dataset(2, 3, &[(0, 2), (1, 2)], g, 0).is_err());
        assert!(default_matrix_dataset(2, 3, &[(5, 0)], g, 0).is_err());
    }

    #[test]
    fn held_out_cell_renders_on_demand() {
        let g = Geometry::default();
        let (m, _) = default_matrix_dataset(3, 3, &[(2, 0)], g, 4).unwrap();
        let a = m.render_cell("P3", "A1").unwrap();
        let (_, full) = default_matrix_dataset(3, 3, &[], g, 4).unwrap();
        assert_eq!(a, full[6]);
    }

    #[test]
    fn holdout_parsing() {
        assert_eq!(parse_holdout("2:0, 1:1").unwrap(), vec![(2, 0), (1, 1)]);
        assert_eq!(parse_holdout("").unwrap(), vec![]);
        assert!(parse_holdout("2-0").is_err());
    }
}

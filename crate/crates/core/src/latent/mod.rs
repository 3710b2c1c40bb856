//! Static/transient latent codes and the learned dictionary.
//!
//! A transient matrix is stored frame-major as a `[L, D_t]` tensor: row `i`
//! is the code of frame `i`. This is the same memory layout as a `D_t x L`
//! matrix stored column-major by frame.

pub(crate) mod io;
mod linalg;

pub use io::{decode_dictionary, encode_dictionary, load_dictionary, save_dictionary};
pub use linalg::{low_rank_project, project_unit_ball, project_unit_ball_in_place, singular_values, symmetric_eigen};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    static_code: Vec<f32>,
    transient: Tensor,
}

impl LatentCode {
    pub fn new(static_code: Vec<f32>, transient: Tensor) -> Result<Self> {
        if static_code.is_empty() {
            return Err(Error::invalid("static code must not be empty"));
        }
        if transient.rank() != 2 {
            return Err(Error::invalid(format!(
                "transient code must be [L, D_t], got {:?}",
                transient.shape()
            )));
        }
        Ok(LatentCode { static_code, transient })
    }

    pub fn static_code(&self) -> &[f32] {
        &self.static_code
    }

    /// `[L, D_t]`, one row per frame.
    pub fn transient(&self) -> &Tensor {
        &self.transient
    }

    pub fn transient_frame(&self, i: usize) -> &[f32] {
        self.transient.row(i)
    }

    pub fn static_dim(&self) -> usize {
        self.static_code.len()
    }

    pub fn transient_dim(&self) -> usize {
        self.transient.shape()[1]
    }

    pub fn frames(&self) -> usize {
        self.transient.shape()[0]
    }

    /// Whether `z_s` and every frame code lie in the closed unit ball.
    pub fn in_unit_ball(&self) -> bool {
        let n = |v: &[f32]| v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        n(&self.static_code) <= 1.0 && (0..self.frames()).all(|i| n(self.transient.row(i)) <= 1.0)
    }
}

/// How videos map onto dictionary entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyMode {
    PerVideo,
    PerClass,
    Global,
}

impl KeyMode {
    fn as_str(self) -> &'static str {
        match self {
            KeyMode::PerVideo => "per-video",
            KeyMode::PerClass => "per-class",
            KeyMode::Global => "global",
        }
    }
}

impl FromStr for KeyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "per-video" => Ok(KeyMode::PerVideo),
            "per-class" => Ok(KeyMode::PerClass),
            "global" => Ok(KeyMode::Global),
            other => Err(Error::invalid(format!(
                "unknown key mode `{other}` (expected per-video, per-class or global)"
            ))),
        }
    }
}

/// Sharing of static and transient entries. The static class of a video is
/// its identity, the transient class its motion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SharingScheme {
    pub static_key: KeyMode,
    pub transient_key: KeyMode,
}

impl Default for SharingScheme {
    fn default() -> Self {
        SharingScheme {
            static_key: KeyMode::PerVideo,
            transient_key: KeyMode::PerClass,
        }
    }
}

impl fmt::Display for SharingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "static={},transient={}",
            self.static_key.as_str(),
            self.transient_key.as_str()
        )
    }
}

impl FromStr for SharingScheme {
    type Err = Error;

    /// Parses `static=per-video,transient=per-class`; either part may be
    /// omitted and keeps its default.
    fn from_str(s: &str) -> Result<Self> {
        let mut scheme = SharingScheme::default();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("bad scheme component `{part}`")))?;
            match key.trim() {
                "static" => scheme.static_key = value.parse()?,
                "transient" => scheme.transient_key = value.parse()?,
                other => return Err(Error::invalid(format!("unknown scheme key `{other}`"))),
            }
        }
        Ok(scheme)
    }
}

impl Serialize for SharingScheme {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SharingScheme {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Labels of one training video.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoLabels {
    pub video: String,
    pub identity: String,
    pub motion: String,
}

impl VideoLabels {
    pub fn new(video: &str, identity: &str, motion: &str) -> Self {
        VideoLabels {
            video: video.into(),
            identity: identity.into(),
            motion: motion.into(),
        }
    }
}

pub const GLOBAL_KEY: &str = "global";

impl SharingScheme {
    /// Dictionary entry names `(static, transient)` for a video.
    pub fn resolve(&self, labels: &VideoLabels) -> (String, String) {
        let pick = |mode: KeyMode, class: &str| match mode {
            KeyMode::PerVideo => labels.video.clone(),
            KeyMode::PerClass => class.to_string(),
            KeyMode::Global => GLOBAL_KEY.to_string(),
        };
        (
            pick(self.static_key, &labels.identity),
            pick(self.transient_key, &labels.motion),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentDims {
    pub static_dim: usize,
    pub transient_dim: usize,
    pub frames: usize,
}

/// Named static vectors and named transient matrices, in insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentDictionary {
    pub dims: LatentDims,
    pub scheme: SharingScheme,
    statics: Vec<(String, Vec<f32>)>,
    transients: Vec<(String, Tensor)>,
}

impl LatentDictionary {
    pub fn new(dims: LatentDims, scheme: SharingScheme) -> Self {
        LatentDictionary {
            dims,
            scheme,
            statics: Vec::new(),
            transients: Vec::new(),
        }
    }

    pub fn insert_static(&mut self, name: &str, v: Vec<f32>) -> Result<()> {
        if v.len() != self.dims.static_dim {
            return Err(Error::invalid(format!(
                "static entry `{name}` has length {}, expected {}",
                v.len(),
                self.dims.static_dim
            )));
        }
        if self.statics.iter().any(|(n, _)| n == name) {
            return Err(Error::invalid(format!("duplicate static entry `{name}`")));
        }
        self.statics.push((name.to_string(), v));
        Ok(())
    }

    pub fn insert_transient(&mut self, name: &str, m: Tensor) -> Result<()> {
        let expect = [self.dims.frames, self.dims.transient_dim];
        if m.shape() != expect {
            return Err(Error::ShapeMismatch {
                op: "insert_transient",
                left: m.shape().to_vec(),
                right: expect.to_vec(),
            });
        }
        if self.transients.iter().any(|(n, _)| n == name) {
            return Err(Error::invalid(format!("duplicate transient entry `{name}`")));
        }
        self.transients.push((name.to_string(), m));
        Ok(())
    }

    pub fn static_names(&self) -> Vec<String> {
        self.statics.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn transient_names(&self) -> Vec<String> {
        self.transients.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn statics(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.statics.iter().map(|(n, v)| (n.as_str(), v.as_slice()))
    }

    pub fn transients(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.transients.iter().map(|(n, m)| (n.as_str(), m))
    }

    pub fn get_static(&self, name: &str) -> Result<&[f32]> {
        self.statics
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::UnknownName(name.to_string()))
    }

    pub fn get_transient(&self, name: &str) -> Result<&Tensor> {
        self.transients
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::UnknownName(name.to_string()))
    }

    pub fn static_mut(&mut self, name: &str) -> Result<&mut Vec<f32>> {
        self.statics
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::UnknownName(name.to_string()))
    }

    pub fn transient_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.transients
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::UnknownName(name.to_string()))
    }

    /// Pair a static entry with a transient entry, whether or not the two
    /// were ever seen together in training.
    pub fn compose(&self, static_name: &str, transient_name: &str) -> Result<LatentCode> {
        let s = self.get_static(static_name)?;
        let t = self.get_transient(transient_name)?;
        LatentCode::new(s.to_vec(), t.clone())
    }

    /// Every entry satisfies the unit-ball constraint (per vector).
    pub fn in_unit_ball(&self) -> bool {
        let n = |v: &[f32]| v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        self.statics.iter().all(|(_, v)| n(v) <= 1.0)
            && self
                .transients
                .iter()
                .all(|(_, m)| (0..m.shape()[0]).all(|i| n(m.row(i)) <= 1.0))
    }
}

/// Fresh dictionary for `videos` under `scheme`.
///
/// Static entries are drawn from `N(0, I/D_s)` and transient frame codes from
/// `N(0, I/D_t)`, then projected into the unit ball. Entries appear in the
/// order their first video does.
pub fn init_latents(
    seed: u64,
    dims: LatentDims,
    videos: &[VideoLabels],
    scheme: SharingScheme,
) -> Result<LatentDictionary> {
    if videos.is_empty() {
        return Err(Error::invalid("at least one video is required"));
    }
    if dims.static_dim == 0 || dims.transient_dim == 0 || dims.frames == 0 {
        return Err(Error::invalid(format!("latent dims must be positive, got {dims:?}")));
    }
    for (i, v) in videos.iter().enumerate() {
        if videos[..i].iter().any(|w| w.video == v.video) {
            return Err(Error::invalid(format!("duplicate video key `{}`", v.video)));
        }
    }
    let mut static_names: Vec<String> = Vec::new();
    let mut transient_names: Vec<String> = Vec::new();
    for v in videos {
        let (s, t) = scheme.resolve(v);
        if !static_names.contains(&s) {
            static_names.push(s);
        }
        if !transient_names.contains(&t) {
            transient_names.push(t);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let static_dist = Normal::new(0.0, 1.0 / (dims.static_dim as f64).sqrt()).unwrap();
    let transient_dist = Normal::new(0.0, 1.0 / (dims.transient_dim as f64).sqrt()).unwrap();
    let mut dict = LatentDictionary::new(dims, scheme);
    for name in &static_names {
        let mut v: Vec<f32> = (0..dims.static_dim)
            .map(|_| static_dist.sample(&mut rng) as f32)
            .collect();
        project_unit_ball_in_place(&mut v);
        dict.insert_static(name, v)?;
    }
    for name in &transient_names {
        let mut m = Tensor::zeros(&[dims.frames, dims.transient_dim]);
        for i in 0..dims.frames {
            let row = m.row_mut(i);
            for x in row.iter_mut() {
                *x = transient_dist.sample(&mut rng) as f32;
            }
            project_unit_ball_in_place(row);
        }
        dict.insert_transient(name, m)?;
    }
    Ok(dict)
}

/// `z_a + (n/k)(z_b - z_a)` for `n = 1..=k`.
pub fn interpolate_transient(z_a: &[f32], z_b: &[f32], k: usize) -> Result<Vec<Vec<f32>>> {
    if k == 0 {
        return Err(Error::invalid("interpolation needs k >= 1"));
    }
    if z_a.len() != z_b.len() {
        return Err(Error::ShapeMismatch {
            op: "interpolate_transient",
            left: vec![z_a.len()],
            right: vec![z_b.len()],
        });
    }
    Ok((1..=k)
        .map(|n| {
            let t = n as f64 / k as f64;
            z_a.iter()
                .zip(z_b)
                .map(|(&a, &b)| (a as f64 + t * (b as f64 - a as f64)) as f32)
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> LatentDims {
        LatentDims {
            static_dim: 4,
            transient_dim: 3,
            frames: 5,
        }
    }

    fn grid(identities: usize, motions: usize) -> Vec<VideoLabels> {
        let mut v = Vec::new();
        for i in 0..identities {
            for m in 0..motions {
                v.push(VideoLabels::new(
                    &format!("v{i}_{m}"),
                    &format!("P{}", i + 1),
                    &format!("a{m}"),
                ));
            }
        }
        v
    }

    #[test]
    fn weizmann_style_class_sharing() {
        let scheme = SharingScheme {
            static_key: KeyMode::PerClass,
            transient_key: KeyMode::PerClass,
        };
        let d = init_latents(1, dims(), &grid(9, 10), scheme).unwrap();
        assert_eq!(d.static_names().len(), 9);
        assert_eq!(d.transient_names().len(), 10);
    }

    #[test]
    fn default_scheme_counts() {
        let d = init_latents(1, dims(), &grid(3, 2), SharingScheme::default()).unwrap();
        assert_eq!(d.static_names().len(), 6);
        assert_eq!(d.transient_names().len(), 2);
        let g = SharingScheme {
            static_key: KeyMode::Global,
            transient_key: KeyMode::PerVideo,
        };
        let d = init_latents(1, dims(), &grid(3, 2), g).unwrap();
        assert_eq!(d.static_names(), vec![GLOBAL_KEY.to_string()]);
        assert_eq!(d.transient_names().len(), 6);
    }

    #[test]
    fn same_seed_same_dictionary() {
        let a = init_latents(7, dims(), &grid(2, 2), SharingScheme::default()).unwrap();
        let b = init_latents(7, dims(), &grid(2, 2), SharingScheme::default()).unwrap();
        let c = init_latents(8, dims(), &grid(2, 2), SharingScheme::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.in_unit_ball());
    }

    #[test]
    fn duplicate_video_keys_rejected() {
        let mut v = grid(1, 2);
        v[1].video = v[0].video.clone();
        assert!(init_latents(0, dims(), &v, SharingScheme::default()).is_err());
    }

    #[test]
    fn fresh_static_norm_near_one_before_projection() {
        // E‖z‖² = D_s · (1/D_s) = 1; average over many draws.
        let d = 64;
        let normal = Normal::new(0.0, 1.0 / (d as f64).sqrt()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trials = 2000;
        let mean: f64 = (0..trials)
            .map(|_| (0..d).map(|_| normal.sample(&mut rng).powi(2)).sum::<f64>())
            .sum::<f64>()
            / trials as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean squared norm {mean}");
    }

    #[test]
    fn interpolation_examples() {
        let out = interpolate_transient(&[0.0, 0.0], &[3.0, 3.0], 3).unwrap();
        assert_eq!(out, vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]);
        assert_eq!(
            interpolate_transient(&[0.5, -1.0], &[2.0, 4.0], 1).unwrap(),
            vec![vec![2.0, 4.0]]
        );
        let same = interpolate_transient(&[0.25, 0.5], &[0.25, 0.5], 4).unwrap();
        assert!(same.iter().all(|z| z == &[0.25, 0.5]));
        assert!(interpolate_transient(&[0.0], &[1.0], 0).is_err());
    }

    #[test]
    fn compose_pairs_unseen_combinations() {
        let d = init_latents(
            2,
            dims(),
            &grid(2, 2),
            SharingScheme {
                static_key: KeyMode::PerClass,
                transient_key: KeyMode::PerClass,
            },
        )
        .unwrap();
        let a = d.compose("P1", "a1").unwrap();
        let b = d.compose("P2", "a1").unwrap();
        assert_eq!(a.transient(), b.transient());
        assert_ne!(a.static_code(), b.static_code());
        match d.compose("P9", "a1") {
            Err(Error::UnknownName(n)) => assert_eq!(n, "P9"),
            other => panic!("expected unknown name, got {other:?}"),
        }
    }

    #[test]
    fn scheme_round_trips_through_text() {
        let s: SharingScheme = "static=per-class,transient=global".parse().unwrap();
        assert_eq!(s.static_key, KeyMode::PerClass);
        assert_eq!(s.transient_key, KeyMode::Global);
        assert_eq!(s.to_string().parse::<SharingScheme>().unwrap(), s);
        assert!("static=sometimes".parse::<SharingScheme>().is_err());
    }
}

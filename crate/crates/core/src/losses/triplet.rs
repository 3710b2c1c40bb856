//! Temporal triplets over transient codes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, Real, Tensor, Var};

/// `(anchor, positive, negative)` frame indices, 1-based within a video.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TripletIndices {
    pub triples: Vec<(usize, usize, usize)>,
}

impl TripletIndices {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Whether every triple respects the window `w` and lies in `1..=frames`.
    pub fn is_valid(&self, frames: usize, w: usize) -> bool {
        self.triples.iter().all(|&(a, p, n)| {
            let in_range = |i: usize| (1..=frames).contains(&i);
            in_range(a) && in_range(p) && in_range(n) && p != a && a.abs_diff(p) <= w && a.abs_diff(n) > w
        })
    }
}

/// Frames (1-based) having at least one positive and one negative.
pub fn valid_anchors(frames: usize, w: usize) -> Vec<usize> {
    (1..=frames)
        .filter(|&a| {
            let pos = (1..=frames).any(|p| p != a && a.abs_diff(p) <= w);
            let neg = (1..=frames).any(|n| a.abs_diff(n) > w);
            pos && neg
        })
        .collect()
}

pub fn sample_triplets_with(rng: &mut impl Rng, frames: usize, w: usize, m: usize) -> Result<TripletIndices> {
    if m == 0 {
        return Err(Error::invalid("need at least one triplet per step"));
    }
    if w == 0 {
        return Err(Error::invalid("temporal window must be >= 1"));
    }
    let anchors = valid_anchors(frames, w);
    if anchors.is_empty() {
        return Err(Error::invalid(format!(
            "no frame of a {frames}-frame clip has a negative farther than {w} frames away; \
             shrink the window or use longer clips"
        )));
    }
    let mut triples = Vec::with_capacity(m);
    for _ in 0..m {
        let a = anchors[rng.random_range(0..anchors.len())];
        let lo = a.saturating_sub(w).max(1);
        let hi = (a + w).min(frames);
        let positives: Vec<usize> = (lo..=hi).filter(|&p| p != a).collect();
        let negatives: Vec<usize> = (1..=frames).filter(|&n| a.abs_diff(n) > w).collect();
        let p = positives[rng.random_range(0..positives.len())];
        let n = negatives[rng.random_range(0..negatives.len())];
        triples.push((a, p, n));
    }
    Ok(TripletIndices { triples })
}

/// `m` triples with anchors drawn uniformly over [`valid_anchors`].
pub fn sample_triplets(frames: usize, w: usize, m: usize, seed: u64) -> Result<TripletIndices> {
    sample_triplets_with(&mut ChaCha8Rng::seed_from_u64(seed), frames, w, m)
}

/// Mean hinge `max(‖a-p‖² + α - ‖a-n‖², 0)` over the triples; `z_t` is `[L, D_t]`.
pub fn triplet_graph<T: Real>(g: &mut Graph<T>, z_t: Var, triples: &TripletIndices, margin: f64) -> Result<Var> {
    if triples.is_empty() {
        return Err(Error::invalid("triplet loss needs at least one triple"));
    }
    let frames = g.shape(z_t)[0];
    let idx = |f: fn(&(usize, usize, usize)) -> usize| -> Result<Vec<usize>> {
        triples
            .triples
            .iter()
            .map(|t| {
                let i = f(t);
                if i == 0 || i > frames {
                    Err(Error::invalid(format!("triplet index {i} outside 1..={frames}")))
                } else {
                    Ok(i - 1)
                }
            })
            .collect()
    };
    let (ia, ip, in_) = (idx(|t| t.0)?, idx(|t| t.1)?, idx(|t| t.2)?);
    let a = g.gather(z_t, &ia)?;
    let p = g.gather(z_t, &ip)?;
    let n = g.gather(z_t, &in_)?;
    let dp = g.sub(a, p)?;
    let dn = g.sub(a, n)?;
    let dp2 = g.mul(dp, dp)?;
    let dn2 = g.mul(dn, dn)?;
    let d_ap = g.sum_last(dp2);
    let d_an = g.sum_last(dn2);
    let gap = g.sub(d_ap, d_an)?;
    let shifted = g.add_scalar(gap, margin);
    let hinge = g.relu(shifted);
    g.mean(hinge)
}

pub fn triplet_loss<T: Real>(z_t: &Tensor<T>, triples: &TripletIndices, margin: f64) -> Result<f64> {
    if z_t.rank() != 2 {
        return Err(Error::invalid(format!("z_t must be [L, D_t], got {:?}", z_t.shape())));
    }
    let mut g = Graph::new();
    let z = g.constant(z_t.clone());
    let l = triplet_graph(&mut g, z, triples, margin)?;
    Ok(g.value(l).item().as_f64())
}

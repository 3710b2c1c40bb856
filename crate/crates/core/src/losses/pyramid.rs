//! Laplacian pyramid and the level-weighted ℓ1 distance built on it.

use crate::error::{Error, Result};
use crate::tensor::kernels::{resample_forward, Resample};
use crate::tensor::{Graph, Real, Tensor, Var};

pub(crate) fn check_levels(shape: &[usize], levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::invalid("pyramid needs at least one level"));
    }
    if shape.len() < 2 {
        return Err(Error::invalid(format!(
            "pyramid input needs two spatial axes, got {shape:?}"
        )));
    }
    let f = 1usize << (levels - 1);
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    if h % f != 0 || w % f != 0 {
        return Err(Error::invalid(format!(
            "spatial extents {h}x{w} are not divisible by 2^{} for {levels} levels",
            levels - 1
        )));
    }
    Ok(())
}

/// Bands of `x` over its two trailing axes, finest first. The last entry is
/// the coarsest Gaussian level, so `levels = 1` returns `[x]`.
pub fn laplacian_pyramid<T: Real>(x: &Tensor<T>, levels: usize) -> Result<Vec<Tensor<T>>> {
    check_levels(x.shape(), levels)?;
    let mut bands = Vec::with_capacity(levels);
    let mut cur = x.clone();
    for _ in 1..levels {
        let down = resample_forward(Resample::Down, &cur)?;
        let up = resample_forward(Resample::Up, &down)?;
        bands.push(cur.zip_map(&up, "laplacian_pyramid", |a, b| a - b)?);
        cur = down;
    }
    bands.push(cur);
    Ok(bands)
}

/// Inverse of [`laplacian_pyramid`]: upsample the running image and add the
/// next finer band.
pub fn collapse_pyramid<T: Real>(bands: &[Tensor<T>]) -> Result<Tensor<T>> {
    let (coarse, rest) = bands.split_last().ok_or(Error::EmptyTensor)?;
    let mut cur = coarse.clone();
    for band in rest.iter().rev() {
        let up = resample_forward(Resample::Up, &cur)?;
        cur = band.zip_map(&up, "collapse_pyramid", |a, b| a + b)?;
    }
    Ok(cur)
}

/// Weight of band `j` (1-based, finest first).
pub fn level_weight(j: usize) -> f64 {
    4f64.powi(j as i32)
}

/// `Σ_j 4^j · mean|band_j(x - y)|`, recorded on the tape.
///
/// The pyramid is linear, so the bands of the difference equal the difference
/// of the bands. Leading axes are treated as a batch of planes; since every
/// plane has the same band sizes, the result on `[L, C, H, W]` equals the mean
/// over frames of the per-frame value.
pub fn lap1_graph<T: Real>(g: &mut Graph<T>, x: Var, y: Var, levels: usize) -> Result<Var> {
    check_levels(g.shape(x), levels)?;
    let diff = g.sub(x, y)?;
    let mut terms = Vec::with_capacity(levels);
    let mut cur = diff;
    for j in 1..levels {
        let down = g.downsample(cur)?;
        let up = g.upsample(down)?;
        let band = g.sub(cur, up)?;
        terms.push(band_term(g, band, j)?);
        cur = down;
    }
    terms.push(band_term(g, cur, levels)?);
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = g.add(total, t)?;
    }
    Ok(total)
}

fn band_term<T: Real>(g: &mut Graph<T>, band: Var, j: usize) -> Result<Var> {
    let n = g.value(band).len() as f64;
    let l1 = g.l1(band)?;
    Ok(g.scale(l1, level_weight(j) / n))
}

/// Level-weighted ℓ1 distance between two equally shaped frames.
pub fn lap1_loss<T: Real>(x: &Tensor<T>, y: &Tensor<T>, levels: usize) -> Result<f64> {
    x.expect_same_shape(y, "lap1_loss")?;
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let yv = g.constant(y.clone());
    let l = lap1_graph(&mut g, xv, yv, levels)?;
    Ok(g.value(l).item().as_f64())
}

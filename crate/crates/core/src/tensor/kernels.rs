//! Raw forward/adjoint kernels. Shapes are validated by the callers in
//! `graph.rs`; these functions assume conforming inputs.

use std::ops::Range;

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Output indices `o` in `0..n_out` whose source `o * stride + offset` lands
/// inside `0..n_in`.
fn valid_range(n_out: usize, n_in: usize, stride: usize, offset: isize) -> Range<usize> {
    let s = stride as isize;
    let lo = if offset >= 0 { 0 } else { (-offset + s - 1) / s };
    let hi_src = n_in as isize - 1 - offset;
    if hi_src < 0 {
        return 0..0;
    }
    let hi = (hi_src / s + 1).min(n_out as isize);
    if lo >= hi {
        0..0
    } else {
        lo as usize..hi as usize
    }
}

pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0] {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(Tensor::from_parts(vec![m, n], out))
}

/// `g · bᵀ` for the left operand of a matmul.
pub fn matmul_grad_lhs<T: Real>(g: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (m, n) = (g.shape[0], g.shape[1]);
    let k = b.shape[0];
    let mut out = vec![T::zero(); m * k];
    for i in 0..m {
        let grow = &g.data[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b.data[p * n..(p + 1) * n];
            let mut acc = T::zero();
            for (&gv, &bv) in grow.iter().zip(brow) {
                acc += gv * bv;
            }
            out[i * k + p] = acc;
        }
    }
    Tensor::from_parts(vec![m, k], out)
}

/// `aᵀ · g` for the right operand of a matmul.
pub fn matmul_grad_rhs<T: Real>(a: &Tensor<T>, g: &Tensor<T>) -> Tensor<T> {
    let (m, k) = (a.shape[0], a.shape[1]);
    let n = g.shape[1];
    let mut out = vec![T::zero(); k * n];
    for i in 0..m {
        let grow = &g.data[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    Tensor::from_parts(vec![k, n], out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub n: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub h_in: usize,
    pub w_in: usize,
    pub h_out: usize,
    pub w_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

pub fn conv2d_out_extent(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < k || stride == 0 {
        return None;
    }
    Some((padded - k) / stride + 1)
}

pub fn conv_transpose2d_out_extent(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let full = (input - 1) * stride + k;
    if full <= 2 * pad || stride == 0 {
        return None;
    }
    Some(full - 2 * pad)
}

/// `x: [N, Ci, H, W]`, `w: [Co, Ci, k, k]`.
pub fn conv2d_forward<T: Real>(x: &[T], w: &[T], g: &ConvGeom) -> Vec<T> {
    let mut out = vec![T::zero(); g.n * g.c_out * g.h_out * g.w_out];
    let (hi, wi, ho, wo, k) = (g.h_in, g.w_in, g.h_out, g.w_out, g.k);
    for n in 0..g.n {
        for co in 0..g.c_out {
            let obase = (n * g.c_out + co) * ho * wo;
            for ci in 0..g.c_in {
                let xbase = (n * g.c_in + ci) * hi * wi;
                for ky in 0..k {
                    let oy_r = valid_range(ho, hi, g.stride, ky as isize - g.pad as isize);
                    for kx in 0..k {
                        let wv = w[((co * g.c_in + ci) * k + ky) * k + kx];
                        let ox_r = valid_range(wo, wi, g.stride, kx as isize - g.pad as isize);
                        for oy in oy_r.clone() {
                            let iy = oy * g.stride + ky - g.pad;
                            let orow = obase + oy * wo;
                            let xrow = xbase + iy * wi;
                            for ox in ox_r.clone() {
                                let ix = ox * g.stride + kx - g.pad;
                                out[orow + ox] += wv * x[xrow + ix];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoints of [`conv2d_forward`] with respect to input and weights.
pub fn conv2d_backward<T: Real>(
    x: &[T],
    w: &[T],
    grad: &[T],
    g: &ConvGeom,
    want_x: bool,
    want_w: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let mut gx = want_x.then(|| vec![T::zero(); x.len()]);
    let mut gw = want_w.then(|| vec![T::zero(); w.len()]);
    let (hi, wi, ho, wo, k) = (g.h_in, g.w_in, g.h_out, g.w_out, g.k);
    for n in 0..g.n {
        for co in 0..g.c_out {
            let obase = (n * g.c_out + co) * ho * wo;
            for ci in 0..g.c_in {
                let xbase = (n * g.c_in + ci) * hi * wi;
                for ky in 0..k {
                    let oy_r = valid_range(ho, hi, g.stride, ky as isize - g.pad as isize);
                    for kx in 0..k {
                        let widx = ((co * g.c_in + ci) * k + ky) * k + kx;
                        let wv = w[widx];
                        let ox_r = valid_range(wo, wi, g.stride, kx as isize - g.pad as isize);
                        let mut acc = T::zero();
                        for oy in oy_r.clone() {
                            let iy = oy * g.stride + ky - g.pad;
                            let orow = obase + oy * wo;
                            let xrow = xbase + iy * wi;
                            for ox in ox_r.clone() {
                                let ix = ox * g.stride + kx - g.pad;
                                let gv = grad[orow + ox];
                                if let Some(gx) = gx.as_mut() {
                                    gx[xrow + ix] += wv * gv;
                                }
                                acc += gv * x[xrow + ix];
                            }
                        }
                        if let Some(gw) = gw.as_mut() {
                            gw[widx] += acc;
                        }
                    }
                }
            }
        }
    }
    (gx, gw)
}

/// `x: [N, Ci, H, W]`, `w: [Ci, Co, k, k]` (scatter form).
pub fn conv_transpose2d_forward<T: Real>(x: &[T], w: &[T], g: &ConvGeom) -> Vec<T> {
    let mut out = vec![T::zero(); g.n * g.c_out * g.h_out * g.w_out];
    let (hi, wi, ho, wo, k) = (g.h_in, g.w_in, g.h_out, g.w_out, g.k);
    for n in 0..g.n {
        for ci in 0..g.c_in {
            let xbase = (n * g.c_in + ci) * hi * wi;
            for co in 0..g.c_out {
                let obase = (n * g.c_out + co) * ho * wo;
                for ky in 0..k {
                    // input rows iy whose output row iy*s + ky - p is in range
                    let iy_r = valid_range(hi, ho, g.stride, ky as isize - g.pad as isize);
                    for kx in 0..k {
                        let wv = w[((ci * g.c_out + co) * k + ky) * k + kx];
                        let ix_r = valid_range(wi, wo, g.stride, kx as isize - g.pad as isize);
                        for iy in iy_r.clone() {
                            let oy = iy * g.stride + ky - g.pad;
                            let orow = obase + oy * wo;
                            let xrow = xbase + iy * wi;
                            for ix in ix_r.clone() {
                                let ox = ix * g.stride + kx - g.pad;
                                out[orow + ox] += wv * x[xrow + ix];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn conv_transpose2d_backward<T: Real>(
    x: &[T],
    w: &[T],
    grad: &[T],
    g: &ConvGeom,
    want_x: bool,
    want_w: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let mut gx = want_x.then(|| vec![T::zero(); x.len()]);
    let mut gw = want_w.then(|| vec![T::zero(); w.len()]);
    let (hi, wi, ho, wo, k) = (g.h_in, g.w_in, g.h_out, g.w_out, g.k);
    for n in 0..g.n {
        for ci in 0..g.c_in {
            let xbase = (n * g.c_in + ci) * hi * wi;
            for co in 0..g.c_out {
                let obase = (n * g.c_out + co) * ho * wo;
                for ky in 0..k {
                    let iy_r = valid_range(hi, ho, g.stride, ky as isize - g.pad as isize);
                    for kx in 0..k {
                        let widx = ((ci * g.c_out + co) * k + ky) * k + kx;
                        let wv = w[widx];
                        let ix_r = valid_range(wi, wo, g.stride, kx as isize - g.pad as isize);
                        let mut acc = T::zero();
                        for iy in iy_r.clone() {
                            let oy = iy * g.stride + ky - g.pad;
                            let orow = obase + oy * wo;
                            let xrow = xbase + iy * wi;
                            for ix in ix_r.clone() {
                                let ox = ix * g.stride + kx - g.pad;
                                let gv = grad[orow + ox];
                                if let Some(gx) = gx.as_mut() {
                                    gx[xrow + ix] += wv * gv;
                                }
                                acc += gv * x[xrow + ix];
                            }
                        }
                        if let Some(gw) = gw.as_mut() {
                            gw[widx] += acc;
                        }
                    }
                }
            }
        }
    }
    (gx, gw)
}

/// Pyramid resampling of the two trailing axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Resample {
    /// Binomial blur then stride-2 decimation.
    Down,
    /// Zero insertion then binomial blur with gain 2 per axis.
    Up,
}

const BINOMIAL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

fn reflect101(mut i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let last = n as isize - 1;
    loop {
        if i < 0 {
            i = -i;
        } else if i > last {
            i = 2 * last - i;
        } else {
            return i as usize;
        }
    }
}

/// One-axis linear map as a sparse tap table: `out[o] = Σ w · in[src]`.
fn axis_taps(kind: Resample, n_in: usize) -> Vec<Vec<(usize, f64)>> {
    let push = |taps: &mut Vec<(usize, f64)>, src: usize, w: f64| {
        if let Some(t) = taps.iter_mut().find(|(s, _)| *s == src) {
            t.1 += w;
        } else {
            taps.push((src, w));
        }
    };
    match kind {
        Resample::Down => (0..n_in / 2)
            .map(|o| {
                let mut taps = Vec::with_capacity(5);
                for (t, &w) in BINOMIAL.iter().enumerate() {
                    let src = reflect101(2 * o as isize + t as isize - 2, n_in);
                    push(&mut taps, src, w);
                }
                taps
            })
            .collect(),
        Resample::Up => {
            let n_out = 2 * n_in;
            (0..n_out)
                .map(|o| {
                    let mut taps = Vec::with_capacity(3);
                    for (t, &w) in BINOMIAL.iter().enumerate() {
                        let m = reflect101(o as isize + t as isize - 2, n_out);
                        if m.is_multiple_of(2) {
                            push(&mut taps, m / 2, 2.0 * w);
                        }
                    }
                    taps
                })
                .collect()
        }
    }
}

pub fn resample_out_shape(kind: Resample, shape: &[usize]) -> Result<Vec<usize>> {
    let r = shape.len();
    if r < 2 {
        return Err(Error::invalid(format!(
            "resample needs at least two axes, got {shape:?}"
        )));
    }
    let mut out = shape.to_vec();
    for ax in [r - 2, r - 1] {
        out[ax] = match kind {
            Resample::Down => {
                if !shape[ax].is_multiple_of(2) {
                    return Err(Error::invalid(format!(
                        "downsample needs even spatial extents, got {shape:?}"
                    )));
                }
                shape[ax] / 2
            }
            Resample::Up => shape[ax] * 2,
        };
    }
    Ok(out)
}

/// Apply (or, with `adjoint`, transpose-apply) a resampling map. `shape` is
/// the shape of `x`; `out_shape` the shape of the result.
#[allow(clippy::too_many_arguments)]
fn apply_separable<T: Real>(
    x: &[T],
    rows_in: usize,
    cols_in: usize,
    rows_out: usize,
    cols_out: usize,
    row_taps: &[Vec<(usize, f64)>],
    col_taps: &[Vec<(usize, f64)>],
    adjoint: bool,
) -> Vec<T> {
    let planes = x.len() / (rows_in * cols_in);
    let mut out = vec![T::zero(); planes * rows_out * cols_out];
    // Intermediate: columns resampled, rows untouched.
    let mut tmp = vec![0.0f64; rows_in * cols_out];
    for p in 0..planes {
        let xp = &x[p * rows_in * cols_in..(p + 1) * rows_in * cols_in];
        tmp.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..rows_in {
            let xr = &xp[r * cols_in..(r + 1) * cols_in];
            let tr = &mut tmp[r * cols_out..(r + 1) * cols_out];
            if adjoint {
                for (c_src, taps) in col_taps.iter().enumerate() {
                    let v = xr[c_src].as_f64();
                    for &(c_dst, w) in taps {
                        tr[c_dst] += w * v;
                    }
                }
            } else {
                for (c, taps) in col_taps.iter().enumerate() {
                    tr[c] = taps.iter().map(|&(s, w)| w * xr[s].as_f64()).sum();
                }
            }
        }
        let op = &mut out[p * rows_out * cols_out..(p + 1) * rows_out * cols_out];
        if adjoint {
            let mut acc = vec![0.0f64; rows_out * cols_out];
            for (r_src, taps) in row_taps.iter().enumerate() {
                for &(r_dst, w) in taps {
                    for c in 0..cols_out {
                        acc[r_dst * cols_out + c] += w * tmp[r_src * cols_out + c];
                    }
                }
            }
            for (o, a) in op.iter_mut().zip(acc) {
                *o = T::from_f64(a);
            }
        } else {
            for (r, taps) in row_taps.iter().enumerate() {
                for c in 0..cols_out {
                    let v: f64 = taps.iter().map(|&(s, w)| w * tmp[s * cols_out + c]).sum();
                    op[r * cols_out + c] = T::from_f64(v);
                }
            }
        }
    }
    out
}

pub fn resample_forward<T: Real>(kind: Resample, x: &Tensor<T>) -> Result<Tensor<T>> {
    let out_shape = resample_out_shape(kind, &x.shape)?;
    let r = x.rank();
    let (hi, wi) = (x.shape[r - 2], x.shape[r - 1]);
    let (ho, wo) = (out_shape[r - 2], out_shape[r - 1]);
    let row_taps = axis_taps(kind, hi);
    let col_taps = axis_taps(kind, wi);
    let data = apply_separable(&x.data, hi, wi, ho, wo, &row_taps, &col_taps, false);
    Ok(Tensor::from_parts(out_shape, data))
}

/// Transpose of [`resample_forward`]: maps a gradient on the output back to
/// the input shape `in_shape`.
pub fn resample_adjoint<T: Real>(kind: Resample, grad: &Tensor<T>, in_shape: &[usize]) -> Tensor<T> {
    let r = in_shape.len();
    let (hi, wi) = (in_shape[r - 2], in_shape[r - 1]);
    let (ho, wo) = (grad.shape[r - 2], grad.shape[r - 1]);
    let row_taps = axis_taps(kind, hi);
    let col_taps = axis_taps(kind, wi);
    let data = apply_separable(&grad.data, ho, wo, hi, wi, &row_taps, &col_taps, true);
    Tensor::from_parts(in_shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_range_matches_brute_force() {
        for n_out in 1..7 {
            for n_in in 1..7 {
                for s in 1..4 {
                    for off in -4isize..4 {
                        let expect: Vec<usize> = (0..n_out)
                            .filter(|&o| {
                                let src = o as isize * s as isize + off;
                                src >= 0 && src < n_in as isize
                            })
                            .collect();
                        let got: Vec<usize> = valid_range(n_out, n_in, s, off).collect();
                        assert_eq!(got, expect, "n_out={n_out} n_in={n_in} s={s} off={off}");
                    }
                }
            }
        }
    }

    #[test]
    fn taps_are_normalized() {
        for n in [2usize, 4, 6, 8] {
            for taps in axis_taps(Resample::Down, n) {
                let s: f64 = taps.iter().map(|t| t.1).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
            for taps in axis_taps(Resample::Up, n) {
                let s: f64 = taps.iter().map(|t| t.1).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transposed_conv_extent() {
        assert_eq!(conv_transpose2d_out_extent(4, 4, 2, 1), Some(8));
        assert_eq!(conv2d_out_extent(5, 3, 1, 1), Some(5));
        assert_eq!(conv2d_out_extent(16, 3, 2, 1), Some(8));
    }
}

use std::collections::BTreeMap;
use std::fmt;

use super::kernels::{self, ConvGeom, Resample};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Name of a trainable tensor, e.g. `gen.tconv1.w`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub String);

impl ParamId {
    pub fn new(name: impl Into<String>) -> Self {
        ParamId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ParamId {
    fn from(s: &str) -> Self {
        ParamId(s.to_string())
    }
}

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Gradients keyed by parameter, each shaped like its parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct GradMap<T: Real = f32> {
    grads: BTreeMap<ParamId, Tensor<T>>,
}

impl<T: Real> GradMap<T> {
    pub fn get(&self, id: &ParamId) -> Option<&Tensor<T>> {
        self.grads.get(id)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.grads.get(&ParamId::new(name))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamId, &Tensor<T>)> {
        self.grads.iter()
    }

    pub fn remove(&mut self, id: &ParamId) -> Option<Tensor<T>> {
        self.grads.remove(id)
    }

    pub fn all_finite(&self) -> bool {
        self.grads.values().all(Tensor::all_finite)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    BiasAdd { x: Var, b: Var, axis: usize },
    Conv2d { x: Var, w: Var, geom: ConvGeom },
    ConvTranspose2d { x: Var, w: Var, geom: ConvGeom },
    Concat { parts: Vec<Var>, axis: usize },
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    L1(Var),
    SqL2(Var),
    Sum(Var),
    Mean(Var),
    SumLast(Var),
    Resample(Var, Resample),
    Reshape(Var),
    Gather { x: Var, indices: Vec<usize> },
}

struct Node<T: Real> {
    value: Tensor<T>,
    op: Op,
    needs_grad: bool,
}

/// A single-use tape recording one loss evaluation.
///
/// Leaves are either constants or registered parameters. Every operation
/// evaluates eagerly and records enough to replay its adjoint in
/// [`Graph::gradient`].
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
    params: BTreeMap<ParamId, Var>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: BTreeMap::new(),
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Register a differentiable leaf. Names must be unique per graph.
    pub fn param(&mut self, id: impl Into<ParamId>, t: Tensor<T>) -> Result<Var> {
        let id = id.into();
        if self.params.contains_key(&id) {
            return Err(Error::invalid(format!("parameter `{id}` registered twice")));
        }
        let v = self.push(t, Op::Leaf, true);
        self.params.insert(id, v);
        Ok(v)
    }

    pub fn param_var(&self, id: &ParamId) -> Option<Var> {
        self.params.get(id).copied()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::matmul(self.value(a), self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// Add a vector `b` broadcast along `axis` of `x`.
    pub fn bias_add(&mut self, x: Var, b: Var, axis: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let bs = self.shape(b).to_vec();
        if axis >= xs.len() || bs.len() != 1 || bs[0] != xs[axis] {
            return Err(Error::ShapeMismatch {
                op: "bias_add",
                left: xs,
                right: bs,
            });
        }
        let inner: usize = xs[axis + 1..].iter().product();
        let dim = xs[axis];
        let bv = self.value(b).data().to_vec();
        let mut out = self.value(x).clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += bv[(i / inner) % dim];
        }
        let ng = self.needs(x) || self.needs(b);
        Ok(self.push(out, Op::BiasAdd { x, b, axis }, ng))
    }

    fn conv_geom(&self, x: Var, w: Var, stride: usize, pad: usize, transposed: bool) -> Result<ConvGeom> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        let mismatch = || Error::ShapeMismatch {
            op: if transposed { "conv_transpose2d" } else { "conv2d" },
            left: xs.to_vec(),
            right: ws.to_vec(),
        };
        if xs.len() != 4 || ws.len() != 4 || ws[2] != ws[3] || stride == 0 {
            return Err(mismatch());
        }
        let k = ws[2];
        let (c_in, c_out) = if transposed { (ws[0], ws[1]) } else { (ws[1], ws[0]) };
        if xs[1] != c_in {
            return Err(mismatch());
        }
        let extent = |n| {
            if transposed {
                kernels::conv_transpose2d_out_extent(n, k, stride, pad)
            } else {
                kernels::conv2d_out_extent(n, k, stride, pad)
            }
        };
        let h_out = extent(xs[2]).ok_or_else(mismatch)?;
        let w_out = extent(xs[3]).ok_or_else(mismatch)?;
        Ok(ConvGeom {
            n: xs[0],
            c_in,
            c_out,
            h_in: xs[2],
            w_in: xs[3],
            h_out,
            w_out,
            k,
            stride,
            pad,
        })
    }

    /// `x: [N, Ci, H, W]`, `w: [Co, Ci, k, k]`, zero padding.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let geom = self.conv_geom(x, w, stride, pad, false)?;
        let data = kernels::conv2d_forward(self.value(x).data(), self.value(w).data(), &geom);
        let out = Tensor::from_parts(vec![geom.n, geom.c_out, geom.h_out, geom.w_out], data);
        let ng = self.needs(x) || self.needs(w);
        Ok(self.push(out, Op::Conv2d { x, w, geom }, ng))
    }

    /// `x: [N, Ci, H, W]`, `w: [Ci, Co, k, k]`; output extent `(n-1)·s - 2p + k`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let geom = self.conv_geom(x, w, stride, pad, true)?;
        let data = kernels::conv_transpose2d_forward(self.value(x).data(), self.value(w).data(), &geom);
        let out = Tensor::from_parts(vec![geom.n, geom.c_out, geom.h_out, geom.w_out], data);
        let ng = self.needs(x) || self.needs(w);
        Ok(self.push(out, Op::ConvTranspose2d { x, w, geom }, ng))
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts.first().ok_or(Error::EmptyTensor)?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::invalid(format!("concat axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let conform =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !conform {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    left: base,
                    right: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let block = self.shape(p)[axis] * inner;
                data.extend_from_slice(&self.value(p).data()[o * block..(o + 1) * block]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            ng,
        ))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.tanh());
        let ng = self.needs(x);
        self.push(out, Op::Tanh(x), ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| T::one() / (T::one() + (-v).exp()));
        let ng = self.needs(x);
        self.push(out, Op::Sigmoid(x), ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(T::zero()));
        let ng = self.needs(x);
        self.push(out, Op::Relu(x), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let cv = T::from_f64(c);
        let out = self.value(x).map(|v| v * cv);
        let ng = self.needs(x);
        self.push(out, Op::Scale(x, c), ng)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let cv = T::from_f64(c);
        let out = self.value(x).map(|v| v + cv);
        let ng = self.needs(x);
        self.push(out, Op::Shift(x), ng)
    }

    fn reduce(&mut self, x: Var, op: Op, f: impl Fn(&Tensor<T>) -> f64) -> Result<Var> {
        let xv = self.value(x);
        if xv.is_empty() {
            return Err(Error::EmptyTensor);
        }
        let out = Tensor::scalar(T::from_f64(f(xv)));
        let ng = self.needs(x);
        Ok(self.push(out, op, ng))
    }

    /// Sum of absolute values.
    pub fn l1(&mut self, x: Var) -> Result<Var> {
        self.reduce(x, Op::L1(x), Tensor::l1)
    }

    /// Sum of squares.
    pub fn sq_l2(&mut self, x: Var) -> Result<Var> {
        self.reduce(x, Op::SqL2(x), Tensor::sq_l2)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.reduce(x, Op::Sum(x), |t| t.data().iter().map(|v| v.as_f64()).sum())
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.reduce(x, Op::Mean(x), Tensor::mean)
    }

    /// Sum over the trailing axis. `[a, b, n] -> [a, b]`; rank-1 input gives `[1]`.
    pub fn sum_last(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let shape = xv.shape();
        let n = *shape.last().unwrap();
        let out_shape = if shape.len() == 1 {
            vec![1]
        } else {
            shape[..shape.len() - 1].to_vec()
        };
        let data = xv
            .data()
            .chunks(n)
            .map(|c| T::from_f64(c.iter().map(|v| v.as_f64()).sum()))
            .collect();
        let ng = self.needs(x);
        self.push(Tensor::from_parts(out_shape, data), Op::SumLast(x), ng)
    }

    pub fn downsample(&mut self, x: Var) -> Result<Var> {
        self.resample(x, Resample::Down)
    }

    pub fn upsample(&mut self, x: Var) -> Result<Var> {
        self.resample(x, Resample::Up)
    }

    pub fn resample(&mut self, x: Var, kind: Resample) -> Result<Var> {
        let out = kernels::resample_forward(kind, self.value(x))?;
        let ng = self.needs(x);
        Ok(self.push(out, Op::Resample(x, kind), ng))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        let ng = self.needs(x);
        Ok(self.push(out, Op::Reshape(x), ng))
    }

    /// Select slices along the leading axis; indices may repeat.
    pub fn gather(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let outer = xv.shape()[0];
        let inner: usize = xv.shape()[1..].iter().product();
        let mut data = Vec::with_capacity(indices.len() * inner);
        for &i in indices {
            if i >= outer {
                return Err(Error::invalid(format!(
                    "gather index {i} out of range for leading extent {outer}"
                )));
            }
            data.extend_from_slice(&xv.data()[i * inner..(i + 1) * inner]);
        }
        if indices.is_empty() {
            return Err(Error::EmptyTensor);
        }
        let mut shape = xv.shape().to_vec();
        shape[0] = indices.len();
        let ng = self.needs(x);
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::Gather {
                x,
                indices: indices.to_vec(),
            },
            ng,
        ))
    }

    /// Reverse-mode derivative of the scalar `loss` with respect to each of
    /// `params`. Registered parameters that do not feed `loss` get zeros.
    pub fn gradient(&self, loss: Var, params: &[ParamId]) -> Result<GradMap<T>> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut targets = Vec::with_capacity(params.len());
        for id in params {
            let v = self.params.get(id).ok_or_else(|| Error::UnknownParam(id.to_string()))?;
            targets.push((id.clone(), *v));
        }
        let mut grads = self.backward(loss);
        let mut out = BTreeMap::new();
        for (id, v) in targets {
            let g = grads[v.0]
                .take()
                .unwrap_or_else(|| Tensor::zeros(self.value(v).shape()));
            out.insert(id, g);
        }
        Ok(GradMap { grads: out })
    }

    /// Gradients for every registered parameter.
    pub fn gradient_all(&self, loss: Var) -> Result<GradMap<T>> {
        let ids: Vec<ParamId> = self.params.keys().cloned().collect();
        self.gradient(loss, &ids)
    }

    fn backward(&self, loss: Var) -> Vec<Option<Tensor<T>>> {
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(self.value(loss).shape()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let y = &node.value;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        let ga = kernels::matmul_grad_lhs(&g, self.value(*b));
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.needs(*b) {
                        let gb = kernels::matmul_grad_rhs(self.value(*a), &g);
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::BiasAdd { x, b, axis } => {
                    if self.needs(*b) {
                        let shape = g.shape();
                        let inner: usize = shape[axis + 1..].iter().product();
                        let dim = shape[*axis];
                        let mut acc = vec![0.0f64; dim];
                        for (i, v) in g.data().iter().enumerate() {
                            acc[(i / inner) % dim] += v.as_f64();
                        }
                        let gb = Tensor::from_parts(vec![dim], acc.into_iter().map(T::from_f64).collect());
                        accumulate(&mut grads, *b, gb);
                    }
                    if self.needs(*x) {
                        accumulate(&mut grads, *x, g);
                    }
                }
                Op::Conv2d { x, w, geom } => {
                    let (gx, gw) = kernels::conv2d_backward(
                        self.value(*x).data(),
                        self.value(*w).data(),
                        g.data(),
                        geom,
                        self.needs(*x),
                        self.needs(*w),
                    );
                    if let Some(gx) = gx {
                        accumulate(&mut grads, *x, Tensor::from_parts(self.shape(*x).to_vec(), gx));
                    }
                    if let Some(gw) = gw {
                        accumulate(&mut grads, *w, Tensor::from_parts(self.shape(*w).to_vec(), gw));
                    }
                }
                Op::ConvTranspose2d { x, w, geom } => {
                    let (gx, gw) = kernels::conv_transpose2d_backward(
                        self.value(*x).data(),
                        self.value(*w).data(),
                        g.data(),
                        geom,
                        self.needs(*x),
                        self.needs(*w),
                    );
                    if let Some(gx) = gx {
                        accumulate(&mut grads, *x, Tensor::from_parts(self.shape(*x).to_vec(), gx));
                    }
                    if let Some(gw) = gw {
                        accumulate(&mut grads, *w, Tensor::from_parts(self.shape(*w).to_vec(), gw));
                    }
                }
                Op::Concat { parts, axis } => {
                    let shape = g.shape();
                    let outer: usize = shape[..*axis].iter().product();
                    let inner: usize = shape[axis + 1..].iter().product();
                    let total_block = shape[*axis] * inner;
                    let mut offset = 0;
                    for &p in parts {
                        let ps = self.shape(p).to_vec();
                        let block = ps[*axis] * inner;
                        if self.needs(p) {
                            let mut data = Vec::with_capacity(outer * block);
                            for o in 0..outer {
                                let start = o * total_block + offset;
                                data.extend_from_slice(&g.data()[start..start + block]);
                            }
                            accumulate(&mut grads, p, Tensor::from_parts(ps, data));
                        }
                        offset += block;
                    }
                }
                Op::Tanh(x) => {
                    let gx = g.zip_map(y, "tanh", |gv, yv| gv * (T::one() - yv * yv)).unwrap();
                    accumulate(&mut grads, *x, gx);
                }
                Op::Sigmoid(x) => {
                    let gx = g.zip_map(y, "sigmoid", |gv, yv| gv * yv * (T::one() - yv)).unwrap();
                    accumulate(&mut grads, *x, gx);
                }
                Op::Relu(x) => {
                    let gx = g
                        .zip_map(
                            self.value(*x),
                            "relu",
                            |gv, xv| {
                                if xv > T::zero() {
                                    gv
                                } else {
                                    T::zero()
                                }
                            },
                        )
                        .unwrap();
                    accumulate(&mut grads, *x, gx);
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g.map(|v| -v));
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        let ga = g.zip_map(self.value(*b), "mul", |gv, bv| gv * bv).unwrap();
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.needs(*b) {
                        let gb = g.zip_map(self.value(*a), "mul", |gv, av| gv * av).unwrap();
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Scale(x, c) => {
                    let cv = T::from_f64(*c);
                    accumulate(&mut grads, *x, g.map(|v| v * cv));
                }
                Op::Shift(x) => accumulate(&mut grads, *x, g),
                Op::L1(x) => {
                    let gs = g.item();
                    let gx = self.value(*x).map(|v| {
                        if v > T::zero() {
                            gs
                        } else if v < T::zero() {
                            -gs
                        } else {
                            T::zero()
                        }
                    });
                    accumulate(&mut grads, *x, gx);
                }
                Op::SqL2(x) => {
                    let gs = g.item() + g.item();
                    accumulate(&mut grads, *x, self.value(*x).map(|v| gs * v));
                }
                Op::Sum(x) => {
                    accumulate(&mut grads, *x, Tensor::full(self.shape(*x), g.item()));
                }
                Op::Mean(x) => {
                    let n = self.value(*x).len() as f64;
                    let gs = T::from_f64(g.item().as_f64() / n);
                    accumulate(&mut grads, *x, Tensor::full(self.shape(*x), gs));
                }
                Op::SumLast(x) => {
                    let xs = self.shape(*x).to_vec();
                    let n = *xs.last().unwrap();
                    let mut data = Vec::with_capacity(xs.iter().product());
                    for &gv in g.data() {
                        data.extend(std::iter::repeat_n(gv, n));
                    }
                    accumulate(&mut grads, *x, Tensor::from_parts(xs, data));
                }
                Op::Resample(x, kind) => {
                    let gx = kernels::resample_adjoint(*kind, &g, self.shape(*x));
                    accumulate(&mut grads, *x, gx);
                }
                Op::Reshape(x) => {
                    let xs = self.shape(*x).to_vec();
                    accumulate(&mut grads, *x, Tensor::from_parts(xs, g.into_data()));
                }
                Op::Gather { x, indices } => {
                    let xs = self.shape(*x).to_vec();
                    let inner: usize = xs[1..].iter().product();
                    let mut data = vec![T::zero(); xs.iter().product()];
                    for (row, &i) in indices.iter().enumerate() {
                        let src = &g.data()[row * inner..(row + 1) * inner];
                        for (d, &s) in data[i * inner..(i + 1) * inner].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                    accumulate(&mut grads, *x, Tensor::from_parts(xs, data));
                }
            }
        }
        grads
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, x) in existing.data_mut().iter_mut().zip(g.data()) {
                *e += *x;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use latentvid::losses::{objective_graph, sample_triplets, LossConfig};
use latentvid::model::{init_params, video_forward, Bound};
use latentvid::{FrameShape, Graph, ModelConfig, ParamId, Real, Result, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform values in `[-0.5, 0.5]`.
pub fn uniform<T: Real>(rng: &mut impl Rng, shape: &[usize]) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(rng.random_range(-0.5..0.5))).collect();
    Tensor::new(shape, data).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Outcome of comparing reverse-mode gradients against central differences.
#[derive(Debug, Default)]
pub struct FdReport {
    pub checked: usize,
    /// Largest `|g - g_fd| / max(1e-4, 1e-2 |g_fd|)`; at most 1 on success.
    pub worst_ratio: f64,
    pub failures: Vec<String>,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }
}

pub fn fd_tolerance(fd: f64) -> f64 {
    f64::max(1e-4, 1e-2 * fd.abs())
}

/// Central-difference check of `build`, which records a scalar loss from the
/// graph leaves bound to `inputs` (in order).
///
/// With `sample = Some(n)` at most `n` entries of each input are perturbed,
/// chosen with a fixed-seed generator.
pub fn check_gradients<T: Real, S: AsRef<str>>(
    inputs: &[(S, Tensor<T>)],
    build: impl Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
    h: f64,
    sample: Option<usize>,
) -> FdReport {
    let eval = |values: &[Tensor<T>]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let loss = build(&mut g, &vars).expect("forward");
        g.value(loss).item().as_f64()
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|(name, t)| g.param(name.as_ref(), t.clone()).unwrap())
        .collect();
    let loss = build(&mut g, &vars).expect("forward");
    let ids: Vec<ParamId> = inputs.iter().map(|(n, _)| ParamId::new(n.as_ref())).collect();
    let grads = g.gradient(loss, &ids).expect("gradient");

    let mut values: Vec<Tensor<T>> = inputs.iter().map(|(_, t)| t.clone()).collect();
    let mut pick = rng(0x5eed);
    let mut report = FdReport::default();
    for (k, (name, t)) in inputs.iter().enumerate() {
        let name = name.as_ref();
        let analytic = grads.by_name(name).expect("gradient present");
        let indices: Vec<usize> = match sample {
            Some(n) if n < t.len() => (0..n).map(|_| pick.random_range(0..t.len())).collect(),
            _ => (0..t.len()).collect(),
        };
        for i in indices {
            let orig = t.data()[i];
            values[k].data_mut()[i] = T::from_f64(orig.as_f64() + h);
            let up = eval(&values);
            values[k].data_mut()[i] = T::from_f64(orig.as_f64() - h);
            let down = eval(&values);
            values[k].data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = analytic.data()[i].as_f64();
            let ratio = (an - fd).abs() / fd_tolerance(fd);
            report.checked += 1;
            report.worst_ratio = report.worst_ratio.max(ratio);
            if ratio > 1.0 {
                report
                    .failures
                    .push(format!("{name}[{i}]: analytic {an:.6e}, fd {fd:.6e}"));
            }
        }
    }
    report
}

pub type Builder<T> = Box<dyn Fn(&mut Graph<T>, &[Var]) -> Result<Var>>;

/// A differentiable primitive reduced to a scalar for gradient checking.
pub struct PrimitiveCase<T: Real> {
    pub name: &'static str,
    pub inputs: Vec<(&'static str, Tensor<T>)>,
    pub build: Builder<T>,
}

/// `Σ out ⊙ R` for a fixed random `R`, so every output element contributes
/// with a distinct weight.
fn project<T: Real>(g: &mut Graph<T>, out: Var) -> Result<Var> {
    let shape = g.shape(out).to_vec();
    let r = uniform::<T>(&mut rng(0xfeed), &shape);
    let r = g.constant(r);
    let m = g.mul(out, r)?;
    g.sum(m)
}

fn case<T: Real>(
    name: &'static str,
    shapes: &[(&'static str, &[usize])],
    seed: u64,
    f: impl Fn(&mut Graph<T>, &[Var]) -> Result<Var> + 'static,
) -> PrimitiveCase<T> {
    let mut r = rng(seed);
    let inputs = shapes.iter().map(|(n, s)| (*n, uniform(&mut r, s))).collect();
    PrimitiveCase {
        name,
        inputs,
        build: Box::new(move |g, v| {
            let out = f(g, v)?;
            project(g, out)
        }),
    }
}

/// One case per tensor primitive that carries a gradient.
pub fn primitive_cases<T: Real>() -> Vec<PrimitiveCase<T>> {
    vec![
        case("matmul", &[("a", &[3, 4]), ("b", &[4, 2])], 1, |g, v| {
            g.matmul(v[0], v[1])
        }),
        case("bias_add", &[("x", &[2, 3, 4]), ("b", &[3])], 2, |g, v| {
            g.bias_add(v[0], v[1], 1)
        }),
        case("conv2d", &[("x", &[1, 2, 5, 5]), ("w", &[3, 2, 3, 3])], 3, |g, v| {
            g.conv2d(v[0], v[1], 2, 1)
        }),
        case(
            "conv_transpose2d",
            &[("x", &[1, 2, 3, 3]), ("w", &[2, 3, 4, 4])],
            4,
            |g, v| g.conv_transpose2d(v[0], v[1], 2, 1),
        ),
        case("concat", &[("a", &[2, 3]), ("b", &[2, 2])], 5, |g, v| {
            g.concat(&[v[0], v[1]], 1)
        }),
        case("tanh", &[("x", &[2, 3])], 6, |g, v| Ok(g.tanh(v[0]))),
        case("sigmoid", &[("x", &[2, 3])], 7, |g, v| Ok(g.sigmoid(v[0]))),
        case("relu", &[("x", &[2, 3])], 8, |g, v| Ok(g.relu(v[0]))),
        case("add", &[("a", &[2, 3]), ("b", &[2, 3])], 9, |g, v| g.add(v[0], v[1])),
        case("sub", &[("a", &[2, 3]), ("b", &[2, 3])], 10, |g, v| g.sub(v[0], v[1])),
        case("mul", &[("a", &[2, 3]), ("b", &[2, 3])], 11, |g, v| g.mul(v[0], v[1])),
        case("scale", &[("x", &[2, 3])], 12, |g, v| Ok(g.scale(v[0], -1.7))),
        case("add_scalar", &[("x", &[2, 3])], 13, |g, v| Ok(g.add_scalar(v[0], 0.3))),
        case("l1", &[("x", &[2, 3])], 14, |g, v| g.l1(v[0])),
        case("sq_l2", &[("x", &[2, 3])], 15, |g, v| g.sq_l2(v[0])),
        case("sum", &[("x", &[2, 3])], 16, |g, v| g.sum(v[0])),
        case("mean", &[("x", &[2, 3])], 17, |g, v| g.mean(v[0])),
        case("sum_last", &[("x", &[2, 3, 4])], 18, |g, v| Ok(g.sum_last(v[0]))),
        case("downsample", &[("x", &[1, 2, 8, 8])], 19, |g, v| g.downsample(v[0])),
        case("upsample", &[("x", &[1, 2, 4, 4])], 20, |g, v| g.upsample(v[0])),
        case("reshape", &[("x", &[2, 6])], 21, |g, v| g.reshape(v[0], &[3, 4])),
        case("gather", &[("x", &[4, 3])], 22, |g, v| g.gather(v[0], &[2, 0, 2])),
    ]
}

/// The full training objective on a small model, every weight and latent
/// drawn uniformly from `[-0.5, 0.5]`.
pub struct ToyObjective<T: Real> {
    pub inputs: Vec<(String, Tensor<T>)>,
    pub build: Builder<T>,
}

pub fn toy_objective<T: Real>(size: usize, frames: usize, seed: u64) -> ToyObjective<T> {
    let loss = LossConfig {
        lambda_static: 0.5,
        lambda_triplet: 0.5,
        ..LossConfig::default()
    };
    toy_objective_with(size, frames, seed, loss)
}

pub fn toy_objective_with<T: Real>(size: usize, frames: usize, seed: u64, loss: LossConfig) -> ToyObjective<T> {
    let cfg = ModelConfig {
        static_dim: 4,
        transient_dim: 6,
        frames,
        frame: FrameShape::new(3, size, size),
        base_channels: 4,
        hidden: 8,
        seed,
    };
    let params = init_params::<T>(&cfg).unwrap();
    let mut r = rng(seed);
    let mut inputs: Vec<(String, Tensor<T>)> = params
        .generator
        .iter()
        .chain(params.rnn.iter())
        .map(|(id, t)| (id.to_string(), uniform(&mut r, t.shape())))
        .collect();
    let n_weights = inputs.len();
    let names: Vec<ParamId> = inputs.iter().map(|(n, _)| ParamId::new(n.as_str())).collect();
    inputs.push(("z_s".into(), uniform(&mut r, &[cfg.static_dim])));
    inputs.push(("z_t".into(), uniform(&mut r, &[frames, cfg.transient_dim])));
    let target = uniform::<T>(&mut r, &[frames, 3, size, size]).map(|v| v + T::from_f64(0.5));
    let triples = sample_triplets(frames, loss.window, loss.triplets, seed).unwrap();
    let k = 2;

    let build: Builder<T> = Box::new(move |g, v| {
        let bound = Bound::from_pairs(names.iter().cloned().zip(v[..n_weights].iter().copied()));
        let (zs, zt) = (v[n_weights], v[n_weights + 1]);
        let video = video_forward(g, &cfg, &bound, &bound, zs, zt)?;
        let tgt = g.constant(target.clone());
        Ok(objective_graph(g, video, tgt, zt, k, &triples, &loss)?.total)
    });
    ToyObjective { inputs, build }
}

/// Frobenius distance between two equally shaped tensors.
pub fn frobenius<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Product of random `rows x rank` and `rank x cols` factors.
pub fn random_rank_matrix(r: &mut impl Rng, rows: usize, cols: usize, rank: usize) -> Tensor<f64> {
    let a: Tensor<f64> = uniform(r, &[rows, rank]);
    let b: Tensor<f64> = uniform(r, &[rank, cols]);
    let scale = r.random_range(0.5..4.0);
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[i * cols + j] = scale
                * (0..rank)
                    .map(|k| a.data()[i * rank + k] * b.data()[k * cols + j])
                    .sum::<f64>();
        }
    }
    Tensor::new(&[rows, cols], out).unwrap()
}

/// Squared singular values of `m`, descending, from a nalgebra eigensolve of
/// `MᵀM` or `MMᵀ` (whichever is smaller).
pub fn squared_spectrum(m: &Tensor<f64>) -> Vec<f64> {
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    let mat = nalgebra::DMatrix::from_row_slice(rows, cols, m.data());
    let gram = if rows <= cols {
        &mat * mat.transpose()
    } else {
        mat.transpose() * &mat
    };
    let mut ev: Vec<f64> = gram.symmetric_eigen().eigenvalues.iter().map(|v| v.max(0.0)).collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev
}

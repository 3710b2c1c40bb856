//! Ball projection and best low-rank approximation.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

fn norm<T: Real>(v: &[T]) -> f64 {
    v.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt()
}

/// Rescale `v` in place by `1 / max(1, ‖v‖₂)`.
///
/// After a rescale the stored norm is nudged down until it is `<= 1` when
/// recomputed from the stored values, so a second call is a no-op.
pub fn project_unit_ball_in_place<T: Real>(v: &mut [T]) {
    let n = norm(v);
    if n <= 1.0 {
        return;
    }
    let s = 1.0 / n;
    for x in v.iter_mut() {
        *x = T::from_f64(x.as_f64() * s);
    }
    let shrink = T::one() - T::epsilon();
    while norm(v) > 1.0 {
        for x in v.iter_mut() {
            *x *= shrink;
        }
    }
}

pub fn project_unit_ball<T: Real>(v: &[T]) -> Vec<T> {
    let mut out = v.to_vec();
    project_unit_ball_in_place(&mut out);
    out
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// `a` is `n x n` row-major. Returns eigenvalues (descending) and the matching
/// eigenvectors as columns of a row-major `n x n` matrix.
pub fn symmetric_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    const TOL: f64 = 1e-10;
    const MAX_SWEEPS: usize = 100;
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= TOL * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vecs = vec![0.0; n * n];
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vecs[k * n + new] = v[k * n + old];
        }
    }
    (values, vecs)
}

/// Gram matrix of the smaller side and whether it was `MᵀM`.
fn gram<T: Real>(m: &Tensor<T>) -> (Vec<f64>, usize, bool) {
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    let x: Vec<f64> = m.data().iter().map(|v| v.as_f64()).collect();
    if cols <= rows {
        let mut g = vec![0.0; cols * cols];
        for r in 0..rows {
            let row = &x[r * cols..(r + 1) * cols];
            for i in 0..cols {
                for j in 0..cols {
                    g[i * cols + j] += row[i] * row[j];
                }
            }
        }
        (g, cols, true)
    } else {
        let mut g = vec![0.0; rows * rows];
        for i in 0..rows {
            for j in 0..rows {
                g[i * rows + j] = (0..cols).map(|c| x[i * cols + c] * x[j * cols + c]).sum();
            }
        }
        (g, rows, false)
    }
}

fn expect_matrix<T: Real>(m: &Tensor<T>) -> Result<()> {
    if m.rank() != 2 {
        return Err(Error::invalid(format!("expected a matrix, got shape {:?}", m.shape())));
    }
    Ok(())
}

/// Singular values, descending.
pub fn singular_values<T: Real>(m: &Tensor<T>) -> Result<Vec<f64>> {
    expect_matrix(m)?;
    let (g, n, _) = gram(m);
    let (vals, _) = symmetric_eigen(&g, n);
    Ok(vals.into_iter().map(|v| v.max(0.0).sqrt()).collect())
}

/// Best rank-`rank` approximation in Frobenius norm.
///
/// Computed by projecting onto the top eigenvectors of the smaller Gram
/// matrix, so rows (or columns) are orthogonally projected and their norms
/// never grow.
pub fn low_rank_project<T: Real>(m: &Tensor<T>, rank: usize) -> Result<Tensor<T>> {
    expect_matrix(m)?;
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    if rank == 0 || rank > rows.min(cols) {
        return Err(Error::invalid(format!(
            "rank {rank} out of range 1..={} for a {rows}x{cols} matrix",
            rows.min(cols)
        )));
    }
    let (g, n, right) = gram(m);
    let (_, vecs) = symmetric_eigen(&g, n);
    // P = Σ_{k<rank} v_k v_kᵀ
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (0..rank).map(|k| vecs[i * n + k] * vecs[j * n + k]).sum();
        }
    }
    let x: Vec<f64> = m.data().iter().map(|v| v.as_f64()).collect();
    let mut out = vec![T::zero(); rows * cols];
    if right {
        // M P
        for r in 0..rows {
            for c in 0..cols {
                let s: f64 = (0..cols).map(|k| x[r * cols + k] * p[k * cols + c]).sum();
                out[r * cols + c] = T::from_f64(s);
            }
        }
    } else {
        // P M
        for r in 0..rows {
            for c in 0..cols {
                let s: f64 = (0..rows).map(|k| p[r * rows + k] * x[k * cols + c]).sum();
                out[r * cols + c] = T::from_f64(s);
            }
        }
    }
    Tensor::new(m.shape(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_examples() {
        let p = project_unit_ball(&[3.0f64, 4.0]);
        assert!((p[0] - 0.6).abs() < 1e-12 && (p[1] - 0.8).abs() < 1e-12);
        assert_eq!(project_unit_ball(&[0.3f32, 0.4]), vec![0.3f32, 0.4]);
    }

    #[test]
    fn rank_out_of_range() {
        let m = Tensor::<f64>::zeros(&[3, 4]);
        assert!(low_rank_project(&m, 0).is_err());
        assert!(low_rank_project(&m, 4).is_err());
        assert!(low_rank_project(&m, 3).is_ok());
    }

    #[test]
    fn eigen_diagonal() {
        let (vals, _) = symmetric_eigen(&[2.0, 0.0, 0.0, 5.0], 2);
        assert_eq!(vals, vec![5.0, 2.0]);
    }

    #[test]
    fn zero_matrix_projects_to_zero() {
        let m = Tensor::<f32>::zeros(&[4, 3]);
        assert_eq!(low_rank_project(&m, 2).unwrap(), m);
    }
}

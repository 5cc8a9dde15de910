//! Dimensionality estimates: the Johnson-Lindenstrauss worst-case bound and
//! a PCA explained-variance estimate of intrinsic dimension.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JlQuery {
    /// Number of points to embed.
    pub m: u64,
    /// Allowed squared-distance distortion, strictly between 0 and 1.
    pub epsilon: f64,
}

/// Smallest integer `n` with `n > 8 ln(m) / epsilon^2`.
pub fn jl_min_dimension(q: JlQuery) -> Result<u64> {
    ensure(q.m >= 1, || "m must be at least 1".into())?;
    ensure(q.epsilon > 0.0 && q.epsilon < 1.0, || {
        format!("epsilon must lie in (0, 1), got {}", q.epsilon)
    })?;
    let bound = 8.0 * (q.m as f64).ln() / (q.epsilon * q.epsilon);
    Ok(bound.floor() as u64 + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub intrinsic_dim: usize,
    /// `explained_variance[k - 1]` is the variance fraction of the top `k` components.
    pub explained_variance: Vec<f64>,
    pub threshold: f64,
}

/// Ambient dimension above which the covariance is no longer formed densely.
pub const DENSE_EIGEN_LIMIT: usize = 4096;

/// Eigenvalues below this fraction of the largest count as zero.
pub const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct PcaOptions {
    pub dense_limit: usize,
}

impl Default for PcaOptions {
    fn default() -> Self {
        PcaOptions {
            dense_limit: DENSE_EIGEN_LIMIT,
        }
    }
}

pub fn intrinsic_dimension_pca(vectors: &[Vec<f64>], threshold: f64) -> Result<DimensionEstimate> {
    intrinsic_dimension_pca_with(vectors, threshold, PcaOptions::default())
}

pub fn intrinsic_dimension_pca_with(
    vectors: &[Vec<f64>],
    threshold: f64,
    opts: PcaOptions,
) -> Result<DimensionEstimate> {
    ensure(vectors.len() >= 2, || {
        format!("need at least 2 vectors, got {}", vectors.len())
    })?;
    ensure(threshold > 0.0 && threshold <= 1.0, || {
        format!("threshold must lie in (0, 1], got {threshold}")
    })?;
    let d = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: v.len(),
        });
    }

    let x = linalg::centered_matrix(vectors);
    let n = vectors.len();
    let total: f64 = x.iter().map(|v| v * v).sum::<f64>() / (n as f64 - 1.0);
    let degenerate = DimensionEstimate {
        intrinsic_dim: 0,
        explained_variance: Vec::new(),
        threshold,
    };
    if total <= 0.0 || d == 0 {
        return Ok(degenerate);
    }

    // The covariance and the Gram matrix share their non-zero spectrum, so
    // the smaller one is decomposed.
    let dense = d.min(n) <= opts.dense_limit;
    let eigenvalues = if dense {
        let scale = 1.0 / (n as f64 - 1.0);
        let m = if d <= n {
            x.tr_mul(&x) * scale
        } else {
            (&x * x.transpose()) * scale
        };
        linalg::sym_eigen_desc(m).0
    } else {
        return Ok(iterative_estimate(&x, total, threshold));
    };

    let largest = eigenvalues.first().copied().unwrap_or(0.0);
    if largest <= 0.0 {
        return Ok(degenerate);
    }
    let retained: Vec<f64> = eigenvalues
        .into_iter()
        .take_while(|&l| l >= EIGEN_FLOOR * largest)
        .collect();
    let sum: f64 = retained.iter().sum();
    let mut curve = Vec::with_capacity(retained.len());
    let mut acc = 0.0;
    for l in &retained {
        acc += l;
        curve.push(acc / sum);
    }
    if let Some(last) = curve.last_mut() {
        *last = 1.0;
    }
    let intrinsic_dim = curve
        .iter()
        .position(|&f| f >= threshold)
        .map_or(curve.len(), |i| i + 1);
    Ok(DimensionEstimate {
        intrinsic_dim,
        explained_variance: curve,
        threshold,
    })
}

/// Top-k subspace iteration with k doubled until the threshold is crossed.
/// The returned curve stops at the crossing and is measured against the
/// full trace, so its last value is the explained fraction reached.
fn iterative_estimate(x: &DMatrix<f64>, total: f64, threshold: f64) -> DimensionEstimate {
    let (n, d) = x.shape();
    let max_k = d.min(n - 1).max(1);
    let mut k = 8.min(max_k);
    loop {
        let values = top_eigenvalues(x, k);
        let mut curve = Vec::with_capacity(k);
        let mut acc = 0.0;
        let largest = values.first().copied().unwrap_or(0.0);
        for &l in &values {
            if l < EIGEN_FLOOR * largest {
                break;
            }
            acc += l;
            curve.push((acc / total).min(1.0));
        }
        if let Some(i) = curve.iter().position(|&f| f >= threshold) {
            curve.truncate(i + 1);
            return DimensionEstimate {
                intrinsic_dim: i + 1,
                explained_variance: curve,
                threshold,
            };
        }
        if k >= max_k || curve.len() < values.len() {
            let dim = curve.len();
            return DimensionEstimate {
                intrinsic_dim: dim,
                explained_variance: curve,
                threshold,
            };
        }
        k = (k * 2).min(max_k);
    }
}

fn top_eigenvalues(x: &DMatrix<f64>, k: usize) -> Vec<f64> {
    let (n, d) = x.shape();
    let block = (k + 6).min(d);
    let scale = 1.0 / (n as f64 - 1.0);
    let cov_mul = |q: &DMatrix<f64>| x.tr_mul(&(x * q)) * scale;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut q = DMatrix::from_fn(d, block, |_, _| rng.gen::<f64>() - 0.5);
    q = q.qr().q();
    let mut prev: Vec<f64> = Vec::new();
    for _ in 0..500 {
        q = cov_mul(&q).qr().q();
        let ritz = q.tr_mul(&cov_mul(&q));
        let (vals, _) = linalg::sym_eigen_desc(ritz);
        let converged = prev.len() == vals.len()
            && vals
                .iter()
                .zip(&prev)
                .take(k)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * vals[0].abs().max(1e-300));
        prev = vals;
        if converged {
            break;
        }
    }
    prev.truncate(k);
    prev.into_iter().map(|v| v.max(0.0)).collect()
}

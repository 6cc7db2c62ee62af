//! Post-training diagnostics: subspace amplification factors from the SVD of
//! the learned update, and variance/parameter reports.

use alloc::format;
use alloc::vec::Vec;

use libm::{fabs, sqrt};

use crate::adapter::Adapter;
use crate::error::{Result, SeloraError};
use crate::mat::{slice_mean_variance, RealMatrix};

/// Full SVD of a square matrix by one-sided Jacobi rotations.
///
/// Returns `(U, sigma, V)` with singular values sorted descending and
/// `A = U diag(sigma) V^T`. Columns belonging to (numerically) zero singular
/// values are completed to an orthonormal basis deterministically.
pub(crate) fn svd_square(a: &RealMatrix) -> Result<(RealMatrix, Vec<f64>, RealMatrix)> {
    if a.rows() != a.cols() {
        return Err(SeloraError::InvalidDimension(format!(
            "SVD here expects a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    let mut work = a.clone();
    let mut v = RealMatrix::identity(n);

    let tol = 1e-15;
    for _sweep in 0..64 {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..n {
                    let wp = work.get(i, p);
                    let wq = work.get(i, q);
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if fabs(gamma) <= tol * sqrt(alpha * beta) || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + sqrt(1.0 + zeta * zeta))
                } else {
                    -1.0 / (-zeta + sqrt(1.0 + zeta * zeta))
                };
                let c = 1.0 / sqrt(1.0 + t * t);
                let s = c * t;
                for i in 0..n {
                    let wp = work.get(i, p);
                    let wq = work.get(i, q);
                    work.set(i, p, c * wp - s * wq);
                    work.set(i, q, s * wp + c * wq);
                    let vp = v.get(i, p);
                    let vq = v.get(i, q);
                    v.set(i, p, c * vp - s * vq);
                    v.set(i, q, s * vp + c * vq);
                }
            }
        }
        if !rotated {
            break;
        }
    }

    // singular values and descending order
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| work.column_norm(j)).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));

    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let max_sigma = sigma.first().copied().unwrap_or(0.0);
    let zero_threshold = max_sigma * 1e-13;

    let mut u = RealMatrix::zeros(n, n);
    let mut v_sorted = RealMatrix::zeros(n, n);
    let mut defective: Vec<usize> = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            v_sorted.set(i, dst, v.get(i, src));
        }
        if sigma[dst] > zero_threshold && sigma[dst] > 0.0 {
            for i in 0..n {
                u.set(i, dst, work.get(i, src) / sigma[dst]);
            }
        } else {
            defective.push(dst);
        }
    }

    // deterministic completion of the zero-singular-value columns
    for &col in &defective {
        let mut chosen = None;
        for candidate in 0..n {
            let mut vec: Vec<f64> = (0..n)
                .map(|i| if i == candidate { 1.0 } else { 0.0 })
                .collect();
            for j in 0..n {
                if defective.contains(&j) && j >= col {
                    continue; // only orthogonalize against filled columns
                }
                let dot: f64 = (0..n).map(|i| u.get(i, j) * vec[i]).sum();
                for (i, value) in vec.iter_mut().enumerate() {
                    *value -= dot * u.get(i, j);
                }
            }
            let norm = sqrt(vec.iter().map(|x| x * x).sum::<f64>());
            if norm > 0.5 {
                for x in &mut vec {
                    *x /= norm;
                }
                chosen = Some(vec);
                break;
            }
        }
        let vec = chosen.expect("an orthonormal completion always exists");
        for (i, value) in vec.iter().enumerate() {
            u.set(i, col, *value);
        }
    }

    Ok((u, sigma, v_sorted))
}

/// Subspace diagnostics of a learned update against the adapted weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceReport {
    /// `||dW||_F`
    pub delta_norm: f64,
    /// `||U_r^T W V_r||_F`
    pub projected_norm: f64,
    /// `||U_{d-r}^T W V_{d-r}||_F`
    pub residual_projected_norm: f64,
    /// amplification factor `delta_norm / projected_norm`
    pub af: f64,
    /// reverse amplification factor `delta_norm / residual_projected_norm`
    pub raf: f64,
    pub rank_used: usize,
    /// Set when the r-th and (r+1)-th singular values coincide, in which
    /// case the split subspaces are not unique (the norms still are not).
    pub singular_value_tie: bool,
}

/// Projects `w` onto the top-`r` and complementary singular subspaces of
/// `delta_w` and reports the amplification factors.
pub fn amplification_factors(
    w: &RealMatrix,
    delta_w: &RealMatrix,
    r: usize,
) -> Result<SubspaceReport> {
    if w.rows() != w.cols() {
        return Err(SeloraError::InvalidDimension(format!(
            "subspace analysis expects square matrices, got {}x{}",
            w.rows(),
            w.cols()
        )));
    }
    if !w.same_shape(delta_w) {
        return Err(SeloraError::InvalidDimension(format!(
            "W is {}x{} but dW is {}x{}",
            w.rows(),
            w.cols(),
            delta_w.rows(),
            delta_w.cols()
        )));
    }
    let d = w.rows();
    if r == 0 || r >= d {
        return Err(SeloraError::InvalidRank { rank: r, dim: d });
    }

    let (u, sigma, v) = svd_square(delta_w)?;
    // all blocks at once: M = U^T W V
    let m = u.matmul_tn(&w.matmul(&v)?)?;

    let block_norm = |rows: core::ops::Range<usize>, cols: core::ops::Range<usize>| {
        let mut acc = 0.0;
        for i in rows {
            for j in cols.clone() {
                let x = m.get(i, j);
                acc += x * x;
            }
        }
        sqrt(acc)
    };
    let projected_norm = block_norm(0..r, 0..r);
    let residual_projected_norm = block_norm(r..d, r..d);
    let delta_norm = delta_w.frobenius_norm();

    if projected_norm == 0.0 {
        return Err(SeloraError::UndefinedAmplification { reverse: false });
    }
    if residual_projected_norm == 0.0 {
        return Err(SeloraError::UndefinedAmplification { reverse: true });
    }

    let tie_tol = sigma[0].max(1e-300) * 1e-12;
    Ok(SubspaceReport {
        delta_norm,
        projected_norm,
        residual_projected_norm,
        af: delta_norm / projected_norm,
        raf: delta_norm / residual_projected_norm,
        rank_used: r,
        singular_value_tie: (sigma[r - 1] - sigma[r]) <= tie_tol,
    })
}

/// Per-factor statistics of an adapter.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport {
    pub a_tilde_mean: f64,
    pub a_tilde_variance: f64,
    pub b_tilde_mean: f64,
    pub b_tilde_variance: f64,
    pub fa_values_mean: f64,
    pub fa_values_variance: f64,
    pub fb_values_mean: f64,
    pub fb_values_variance: f64,
    /// `Var(materialized A) / Var(A')` achieved at initialization.
    pub init_variance_ratio: f64,
    pub trainable_params: usize,
}

/// Empirical means/variances of the materialized factors and raw spectral
/// values, plus the variance ratio recorded at initialization.
pub fn variance_report(adapter: &Adapter) -> Result<VarianceReport> {
    let (a_tilde, b_tilde, _) = adapter.materialize()?;
    let (fa_mean, fa_var) = slice_mean_variance(adapter.factor_a().values());
    let (fb_mean, fb_var) = slice_mean_variance(adapter.factor_b().values());
    Ok(VarianceReport {
        a_tilde_mean: a_tilde.mean(),
        a_tilde_variance: a_tilde.variance(),
        b_tilde_mean: b_tilde.mean(),
        b_tilde_variance: b_tilde.variance(),
        fa_values_mean: fa_mean,
        fa_values_variance: fa_var,
        fb_values_mean: fb_mean,
        fb_values_variance: fb_var,
        init_variance_ratio: adapter.init_stats().variance_ratio,
        trainable_params: adapter.trainable_parameter_count(),
    })
}

//! Delta-method variances from finite-difference gradients.

use super::{Result, StandardizeError};
use nalgebra::DMatrix;

/// Step for parameter `θ_j` in central differences.
pub fn fd_step(theta_j: f64) -> f64 {
    1e-5 * theta_j.abs().max(1.0)
}

/// Jacobian of a vector functional by central differences; row `r` holds
/// `∂ψ_r/∂θ`.
pub fn jacobian<F: Fn(&[f64]) -> Vec<f64>>(
    psi: F,
    theta: &[f64],
    n_out: usize,
) -> Result<DMatrix<f64>> {
    let p = theta.len();
    let mut jac = DMatrix::zeros(n_out, p);
    let mut th = theta.to_vec();
    for j in 0..p {
        let h = fd_step(theta[j]);
        th[j] = theta[j] + h;
        let up = psi(&th);
        th[j] = theta[j] - h;
        let down = psi(&th);
        th[j] = theta[j];
        for r in 0..n_out {
            let g = (up[r] - down[r]) / (2.0 * h);
            if !g.is_finite() {
                return Err(StandardizeError::NonFiniteGradient {
                    parameter: j,
                    output: r,
                });
            }
            jac[(r, j)] = g;
        }
    }
    Ok(jac)
}

/// `sqrt(gᵀ V g)`.
pub fn quadratic_se(g: &[f64], vcov: &DMatrix<f64>) -> f64 {
    let p = g.len();
    let mut v = 0.0;
    for a in 0..p {
        if g[a] == 0.0 {
            continue;
        }
        for b in 0..p {
            v += g[a] * vcov[(a, b)] * g[b];
        }
    }
    v.max(0.0).sqrt()
}

/// Standard errors of `ψ(θ̂)` for each output component.
pub fn delta_method<F: Fn(&[f64]) -> Vec<f64>>(
    psi: F,
    theta: &[f64],
    vcov: &DMatrix<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let est = psi(theta);
    let jac = jacobian(&psi, theta, est.len())?;
    let se = (0..est.len())
        .map(|r| {
            quadratic_se(
                jac.row(r).iter().copied().collect::<Vec<_>>().as_slice(),
                vcov,
            )
        })
        .collect();
    Ok((est, se))
}

/// Block-diagonal stack of per-model covariance matrices.
pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((off, off), (k, k)).copy_from(b);
        off += k;
    }
    out
}

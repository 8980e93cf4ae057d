//! Per-object process noise estimation. The acceleration driving each state
//! component gets an independent Gamma posterior refit from the expected
//! squared transition residuals of the whole smoothed trajectory.

use nalgebra::{Matrix4, Vector4};

use crate::beliefs::{GammaBelief, GaussianBelief};
use crate::config::ModelConfig;
use crate::scenario::{g_matrix, t_matrix};

/// Expected squared innovation of one transition, mapped back into
/// acceleration coordinates. Uses the full state covariances of both ends,
/// so position-velocity cross terms are counted; under the factorized
/// surrogate the two ends are uncorrelated.
fn transition_residual(prev: &GaussianBelief, next: &GaussianBelief, t: &Matrix4<f64>, g_inv_diag: &Vector4<f64>) -> Vector4<f64> {
    let r = next.mean - t * prev.mean;
    let m = r * r.transpose() + next.cov + t * prev.cov * t.transpose();
    Vector4::from_fn(|j, _| m[(j, j)] * g_inv_diag[j] * g_inv_diag[j])
}

/// Refit the four acceleration-precision posteriors of an object from its
/// archived beliefs. With fewer than two nodes the posterior is the prior.
pub fn update_process_noise(
    nodes: &[GaussianBelief],
    cfg: &ModelConfig,
    dt: f64,
    lambda_a: &mut [GammaBelief; 4],
) {
    let t = t_matrix(dt);
    let g = g_matrix(dt);
    let g_inv_diag = Vector4::from_fn(|j, _| 1.0 / g[(j, j)]);
    let mut v_sum = Vector4::zeros();
    for w in nodes.windows(2) {
        v_sum += transition_residual(&w[0], &w[1], &t, &g_inv_diag);
    }
    let n_trans = nodes.len().saturating_sub(1) as f64;
    for j in 0..4 {
        lambda_a[j] = GammaBelief::new((n_trans + cfg.zeta) / 2.0, (cfg.chi + v_sum[j]) / 2.0);
    }
}

/// Floored posterior means of the acceleration precisions, as used by the
/// transition messages.
pub fn lambda_a_means(lambda_a: &[GammaBelief; 4]) -> Vector4<f64> {
    Vector4::from_fn(|j, _| lambda_a[j].floored_mean())
}

//! Measurement-side state messages: MAP position refinement and the Fisher
//! information that turns one radar's snapshot into a Gaussian message on the
//! object state. Velocity components are unobserved by a single snapshot, so
//! the message precision is rank two.

use nalgebra::{Matrix2, Matrix4, Vector2};
use num_complex::Complex64;

use crate::beliefs::{GaussianMessage, MessageSource};
use crate::config::ModelConfig;
use crate::signal::{steering_correlation, steering_vector, RadarNode};
use crate::ObjectState;

use super::alpha::{position_of, AlphaContext};
use super::EngineError;

/// One Nelder-Mead descent over an axis-aligned box. Candidate vertices are
/// projected back into the box, so the simplex never leaves it. Stops once
/// the simplex diameter drops under `tol`.
fn nm_round<F: FnMut(&Vector2<f64>) -> f64>(
    f: &mut F,
    lo: &Vector2<f64>,
    hi: &Vector2<f64>,
    start: Vector2<f64>,
    scale: f64,
    tol: f64,
) -> (Vector2<f64>, f64) {
    let clamp = |p: &Vector2<f64>| {
        Vector2::new(p.x.clamp(lo.x, hi.x), p.y.clamp(lo.y, hi.y))
    };
    let mut simplex = [
        clamp(&start),
        clamp(&(start + Vector2::new(scale, 0.0))),
        clamp(&(start + Vector2::new(0.0, scale))),
    ];
    let mut values = [f(&simplex[0]), f(&simplex[1]), f(&simplex[2])];
    for _ in 0..200 {
        // Order the vertices best-first.
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal));
        simplex = [simplex[idx[0]], simplex[idx[1]], simplex[idx[2]]];
        values = [values[idx[0]], values[idx[1]], values[idx[2]]];
        let spread = (simplex[0] - simplex[2]).norm().max((simplex[0] - simplex[1]).norm());
        if spread < tol {
            break;
        }
        let centroid = (simplex[0] + simplex[1]) * 0.5;
        let reflected = clamp(&(centroid + (centroid - simplex[2])));
        let fr = f(&reflected);
        if fr > values[0] {
            let expanded = clamp(&(centroid + (centroid - simplex[2]) * 2.0));
            let fe = f(&expanded);
            if fe > fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
        } else if fr > values[1] {
            simplex[2] = reflected;
            values[2] = fr;
        } else {
            let contracted = clamp(&(centroid + (simplex[2] - centroid) * 0.5));
            let fc = f(&contracted);
            if fc > values[2] {
                simplex[2] = contracted;
                values[2] = fc;
            } else {
                // Shrink toward the best vertex.
                simplex[1] = clamp(&(simplex[0] + (simplex[1] - simplex[0]) * 0.5));
                simplex[2] = clamp(&(simplex[0] + (simplex[2] - simplex[0]) * 0.5));
                values[1] = f(&simplex[1]);
                values[2] = f(&simplex[2]);
            }
        }
    }
    let mut best = 0;
    for i in 1..3 {
        if values[i] > values[best] {
            best = i;
        }
    }
    (simplex[best], values[best])
}

/// Maximize `f` over an axis-aligned box with restarted Nelder-Mead: the
/// correlation surface is a narrow ridge (centimeter curvature along range,
/// meters across), and a single simplex collapses along the ridge before it
/// resolves the stiff direction. Each restart re-expands a smaller simplex
/// around the incumbent.
pub(crate) fn maximize_in_box<F: FnMut(&Vector2<f64>) -> f64>(
    mut f: F,
    lo: Vector2<f64>,
    hi: Vector2<f64>,
    start: Vector2<f64>,
    scale: f64,
    tol: f64,
) -> (Vector2<f64>, f64) {
    let mut best = start;
    let mut best_val = f64::NEG_INFINITY;
    let mut round_scale = scale;
    for _ in 0..3 {
        let (p, v) = nm_round(&mut f, &lo, &hi, best, round_scale, tol);
        if v > best_val {
            best = p;
            best_val = v;
        }
        round_scale = (round_scale / 8.0).max(tol);
    }
    (best, best_val)
}

/// Build a rank-two Gaussian state message from a refined position: the
/// position block carries the Fisher information of the snapshot likelihood,
/// the velocity block is zero and its mean is inherited from the prediction.
pub(crate) fn fisher_message(
    radar: &RadarNode,
    map_pos: &Vector2<f64>,
    velocity: &Vector2<f64>,
    xi: f64,
    lambda_z: f64,
    alpha_second_moment: f64,
) -> Result<GaussianMessage, EngineError> {
    let probe = ObjectState::new(map_pos.x, map_pos.y, velocity.x, velocity.y);
    let sv = steering_vector(radar, &probe).map_err(|_| EngineError::UninformativeDataMessage)?;
    let mut jj = Matrix2::zeros();
    for a in 0..2 {
        for b in a..2 {
            let dot: f64 = sv.gradient[a]
                .iter()
                .zip(&sv.gradient[b])
                .map(|(ga, gb)| (ga.conj() * gb).re)
                .sum();
            jj[(a, b)] = dot;
            jj[(b, a)] = dot;
        }
    }
    let fisher = jj * (2.0 * xi * lambda_z * alpha_second_moment);
    if fisher.cholesky().is_none() {
        return Err(EngineError::UninformativeDataMessage);
    }
    let mut precision = Matrix4::zeros();
    precision.view_mut((0, 0), (2, 2)).copy_from(&fisher);
    Ok(GaussianMessage::from_information(probe, precision, MessageSource::Data(radar.id)))
}

/// Compute the state message object `k` receives from this radar's snapshot:
/// peel the other objects off the measurement, refine the position MAP inside
/// a gated box around the forward prediction, and attach the Fisher precision
/// at the optimum. Errors mean the radar has nothing useful to say and the
/// caller should simply skip the message.
pub fn compute_data_message(
    cfg: &ModelConfig,
    ctx: &AlphaContext,
    k: usize,
    xi: &[f64],
    prediction: &GaussianMessage,
) -> Result<GaussianMessage, EngineError> {
    if ctx.signals[k].steering.is_none() {
        return Err(EngineError::UninformativeDataMessage);
    }
    let alpha = ctx.alpha.mean[k];
    let weight = 2.0 * ctx.lambda_z * xi[k];
    if weight * alpha.norm() == 0.0 {
        return Err(EngineError::UninformativeDataMessage);
    }
    let residual = ctx.residual(Some(k), xi);
    let center = position_of(&prediction.mean);
    // Gate the search to seven predicted standard deviations per axis; the
    // prediction precision is diagonal in position for the motion model used.
    let sx = prediction.precision[(0, 0)].max(1e-12).sqrt().recip();
    let sy = prediction.precision[(1, 1)].max(1e-12).sqrt().recip();
    let lo = Vector2::new(center.x - 7.0 * sx, center.y - 7.0 * sy);
    let hi = Vector2::new(center.x + 7.0 * sx, center.y + 7.0 * sy);
    let score = |p: &Vector2<f64>| match steering_correlation(&ctx.radar, p, &residual) {
        Ok(corr) => weight * (alpha.conj() * corr).re,
        Err(_) => f64::NEG_INFINITY,
    };
    let scale = 0.5 * sx.min(sy).max(cfg.map_tol_m);
    let (map_pos, best) = maximize_in_box(score, lo, hi, center, scale, cfg.map_tol_m);
    if !best.is_finite() {
        return Err(EngineError::UninformativeDataMessage);
    }
    let velocity = Vector2::new(prediction.mean.z, prediction.mean.w);
    fisher_message(
        &ctx.radar,
        &map_pos,
        &velocity,
        xi[k],
        ctx.lambda_z,
        ctx.alpha.second_moment(k),
    )
}

/// Correlation magnitude of the residual against a unit steering vector at a
/// trial position; used by the initialization grid refinement where no
/// amplitude estimate exists yet.
pub(crate) fn correlation_energy(radar: &RadarNode, p: &Vector2<f64>, residual: &[Complex64]) -> f64 {
    match steering_correlation(radar, p, residual) {
        Ok(c) => c.norm_sqr(),
        Err(_) => f64::NEG_INFINITY,
    }
}

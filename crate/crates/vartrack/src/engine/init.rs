//! New-object initialization from the residual snapshot.
//!
//! Each node scans what is left of its measurement after the tracked objects
//! are subtracted: a beamformer sweeps a grid of arrival angles at half
//! beamwidth pitch, a zero-padded inverse FFT inverts the matched-filter
//! spectrum into range bins, and the strongest cell is polished by a local
//! correlation search. The refined position is then hypothesized as a new
//! object and kept only when the joint existence objective clears the
//! admission threshold.

use nalgebra::{Matrix2, Matrix4, Vector2};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::beliefs::{fuse_state_marginal, GaussianMessage, MessageSource};
use crate::config::ModelConfig;
use crate::signal::RadarNode;
use crate::ObjectState;

use std::collections::BTreeMap;

use super::alpha::{line_maximize, update_alpha, update_gamma, xi_objective, AlphaContext};
use super::data::{compute_data_message, correlation_energy, maximize_in_box};
use super::{exchange_state_messages, StepNode, TrackStore, TrackedObject};

/// Strongest unexplained point response on the polar detection grid.
pub(crate) struct GridDetection {
    pub position: Vector2<f64>,
    /// Range of the winning cell, used to size the refinement box.
    pub range: f64,
}

/// Sweep arrival angle and range for the largest residual correlation. The
/// angle grid runs at half-beamwidth pitch across the field of view; range is
/// resolved by inverting the matched-filter spectrum with a twofold
/// zero-padded FFT, which puts the bins at half the range resolution.
pub(crate) fn strongest_cell(
    radar: &RadarNode,
    residual: &[Complex64],
    cfg: &ModelConfig,
) -> Option<GridDetection> {
    let n_s = radar.n_samples;
    let n_fft = 2 * n_s;
    let bin_m = radar.range_resolution() * n_s as f64 / n_fft as f64;
    let min_bin = (radar.range_resolution() / bin_m).ceil() as usize;
    let half_pitch = 0.5 * radar.beamwidth_sine();
    let s_max = (cfg.fov_deg.to_radians()).sin();

    let mut sines = Vec::new();
    let mut s = -s_max;
    while s < s_max - 1e-12 {
        sines.push(s);
        s += half_pitch;
    }
    sines.push(s_max);

    let fft = FftPlanner::<f64>::new().plan_fft_inverse(n_fft);
    let two_pi = std::f64::consts::TAU;
    let mut best: Option<(f64, f64, usize)> = None;
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for &sine in &sines {
        // Collapse the virtual array: one beamformed sample per fast-time bin.
        for v in buf.iter_mut() {
            *v = Complex64::new(0.0, 0.0);
        }
        for m in 0..radar.n_tx {
            for j in 0..radar.n_rx {
                let v = radar.tx_spacing_wavelengths * m as f64 + radar.rx_spacing_wavelengths * j as f64;
                let w = Complex64::from_polar(1.0, -two_pi * v * sine);
                let base = (m * radar.n_rx + j) * n_s;
                for i in 0..n_s {
                    buf[i] += w * residual[base + i];
                }
            }
        }
        fft.process(&mut buf);
        for (b, v) in buf.iter().enumerate().skip(min_bin) {
            let e = v.norm_sqr();
            if best.map_or(true, |(be, _, _)| e > be) {
                best = Some((e, sine, b));
            }
        }
    }
    let (_, sine, bin) = best?;
    let range = bin as f64 * bin_m;
    let x_local = range * sine;
    let y_local = range * (1.0 - sine * sine).sqrt();
    let (sin_o, cos_o) = radar.orientation.sin_cos();
    let position = radar.position
        + Vector2::new(cos_o * x_local - sin_o * y_local, sin_o * x_local + cos_o * y_local);
    Some(GridDetection { position, range })
}

/// Polish a grid detection with a local correlation-energy search. The box
/// covers one grid cell in range and cross-range regardless of the radar's
/// orientation.
pub(crate) fn refine_detection(
    radar: &RadarNode,
    det: &GridDetection,
    residual: &[Complex64],
    cfg: &ModelConfig,
) -> Vector2<f64> {
    let bin_m = radar.range_resolution() * 0.5;
    let half = bin_m + det.range * 0.5 * radar.beamwidth_sine();
    let lo = det.position - Vector2::new(half, half);
    let hi = det.position + Vector2::new(half, half);
    let (refined, _) = maximize_in_box(
        |p| correlation_energy(radar, p, residual),
        lo,
        hi,
        det.position,
        0.25 * half,
        cfg.map_tol_m,
    );
    refined
}

/// Run one node's detection turn in the initialization ring: repeatedly pull
/// the strongest residual cell, hypothesize it as a new object across every
/// radar context, and admit it if the joint existence objective exceeds the
/// admission threshold. Returns the admitted (state, existence) pairs for the
/// consensus broadcast; the store and contexts are updated in place.
pub(crate) fn node_detections(
    store: &mut TrackStore,
    ctxs: &mut [AlphaContext],
    node: u32,
    time_index: usize,
) -> Vec<(ObjectState, f64)> {
    let Some(ci) = ctxs.iter().position(|c| c.radar.id == node) else {
        return Vec::new();
    };
    let mut admitted = Vec::new();
    for _ in 0..store.cfg.init_max_per_node {
        let xi_now: Vec<f64> = store.objects.iter().map(|o| o.xi).collect();
        let xi_prev: Vec<f64> = store.objects.iter().map(|o| o.xi_prev).collect();
        let residual = ctxs[ci].residual(None, &xi_now);
        let Some(det) = strongest_cell(&ctxs[ci].radar, &residual, &store.cfg) else {
            break;
        };
        let refined = refine_detection(&ctxs[ci].radar, &det, &residual, &store.cfg);
        let cand_state = ObjectState::new(refined.x, refined.y, 0.0, 0.0);

        // Hypothesize the candidate in every context. The refined position is
        // treated as exact here; the wide birth covariance applies to the
        // state prior, not to the expected signal energy.
        let k = store.objects.len();
        let mut xi_trial = xi_now.clone();
        xi_trial.push(1.0);
        let mut xi_prev_trial = xi_prev.clone();
        xi_prev_trial.push(0.0);
        let mut poisoned = false;
        for ctx in ctxs.iter_mut() {
            ctx.push_object(&cand_state, &Matrix2::zeros(), store.cfg.gamma_init);
            if update_alpha(ctx, &xi_trial).is_err() {
                poisoned = true;
            }
        }
        let xi_c = if poisoned {
            0.0
        } else {
            let mut trial = xi_trial.clone();
            line_maximize(
                |x| {
                    trial[k] = x;
                    xi_objective(ctxs, &trial, &xi_prev_trial, &store.cfg)
                },
                0.0,
                1.0,
            )
        };
        if xi_c <= store.cfg.delta_plus {
            for ctx in ctxs.iter_mut() {
                ctx.remove_object(k);
                let _ = update_alpha(ctx, &xi_now);
            }
            break;
        }

        // Admission: birth prior around the detection, then a measurement
        // message from every radar that sees the candidate, exchanged over
        // the wire and fused into the birth belief. A single-aspect position
        // carries meter-level cross-range error that the other radars would
        // re-detect as a separate object, so the birth must be multistatic.
        let sigma_sq = store.cfg.sigma_po * store.cfg.sigma_po;
        let prior = GaussianMessage::from_moments(
            cand_state,
            Matrix4::identity() * sigma_sq,
            MessageSource::Prior,
        )
        .expect("diagonal birth covariance is positive definite");
        let id = store.next_object_id;
        let res = ctxs[ci].radar.range_resolution();
        let mut gate = Matrix4::zeros();
        gate[(0, 0)] = 1.0 / (res * res);
        gate[(1, 1)] = 1.0 / (res * res);
        gate[(2, 2)] = 1.0 / sigma_sq;
        gate[(3, 3)] = 1.0 / sigma_sq;
        let pred = GaussianMessage::from_information(cand_state, gate, MessageSource::Forward);
        let mut xi_adm = xi_trial.clone();
        xi_adm[k] = xi_c;
        let mut locals: BTreeMap<u32, Vec<(u32, GaussianMessage)>> = BTreeMap::new();
        for ctx in ctxs.iter() {
            if let Ok(m) = compute_data_message(&store.cfg, ctx, k, &xi_adm, &pred) {
                locals.insert(ctx.radar.id, vec![(id, m)]);
            }
        }
        let pool = store.pool.clone();
        let (delivered, bytes) =
            exchange_state_messages(&pool, time_index, time_index as u32, &locals);
        store.bytes_sent_last_step += bytes;
        let data: Vec<GaussianMessage> = delivered.into_iter().map(|(_, m)| m).collect();
        let mut fuse_in = vec![prior.clone()];
        fuse_in.extend(data.iter().cloned());
        let belief = match fuse_state_marginal(&fuse_in) {
            Ok(b) if !data.is_empty() => b,
            _ => {
                for ctx in ctxs.iter_mut() {
                    ctx.remove_object(k);
                    let _ = update_alpha(ctx, &xi_now);
                }
                break;
            }
        };
        store.next_object_id += 1;
        let mut obj = TrackedObject::new(id, time_index, &store.cfg, &store.radars);
        obj.xi = xi_c;
        obj.xi_prev = 0.0;
        obj.nodes.push(StepNode {
            time_index,
            prior: Some(prior),
            data,
            belief,
            xi: xi_c,
        });
        store.objects.push(obj);

        // The admitted position is now cm-sharp: refresh its steering rows
        // with the fused position covariance before trusting the amplitudes.
        let pos_cov = store.objects[k].nodes[0].belief.position_cov();
        let mean = store.objects[k].nodes[0].belief.mean;
        for ctx in ctxs.iter_mut() {
            ctx.refresh_object(k, &mean, &pos_cov);
        }
        let mut xi_all = xi_trial;
        xi_all[k] = xi_c;
        super::alpha::update_xi(ctxs, &mut xi_all, &xi_prev_trial, &store.cfg, 1);
        for ctx in ctxs.iter_mut() {
            let _ = update_alpha(ctx, &xi_all);
        }
        for (i, o) in store.objects.iter_mut().enumerate() {
            o.xi = xi_all[i];
            if let Some(n) = o.nodes.last_mut() {
                n.xi = xi_all[i];
            }
        }
        let eta = store.cfg.eta;
        let anchor = store.cfg.gamma_init;
        for ctx in ctxs.iter_mut() {
            let gb = update_gamma(ctx, k, eta, anchor);
            if let Some(rs) = store.objects[k].per_radar.get_mut(&ctx.radar.id) {
                rs.gamma = gb;
            }
        }
        admitted.push((cand_state, xi_all[k]));
    }
    admitted
}

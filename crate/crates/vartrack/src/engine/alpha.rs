//! Per-radar amplitude, precision and existence updates.
//!
//! Each radar keeps an [`AlphaContext`]: the current snapshot, the steering
//! vectors of every tracked object evaluated at the current state means, and
//! the joint complex-Gaussian amplitude belief. The context is rebuilt at the
//! start of every time step and patched in place as states move, objects are
//! pruned, or candidates are admitted.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use num_complex::Complex64;

use crate::beliefs::{binary_entropy, existence_prior_logit, AmplitudeBelief};
use crate::config::ModelConfig;
use crate::signal::{steering_vector, RadarNode, SteeringVector};
use crate::ObjectState;

use super::EngineError;

/// Signal-side quantities of one object at one radar, evaluated at the
/// current state mean. `steering` is `None` when the object is outside the
/// radar's unambiguous range or its geometry is degenerate; such rows carry
/// zero signal and the amplitude posterior collapses to the prior.
#[derive(Debug, Clone)]
pub struct ObjectSignal {
    pub steering: Option<SteeringVector>,
    /// Inner product of the steering vector with the snapshot, S^H Z.
    pub s_h_z: Complex64,
    /// Real part of the gradient Gram matrix J^H J, position block.
    pub jj: Matrix2<f64>,
    /// Second-order energy correction tr(Sigma_pos J^H J) accounting for
    /// state uncertainty in the expected signal energy.
    pub delta_corr: f64,
}

impl ObjectSignal {
    fn blank() -> Self {
        Self {
            steering: None,
            s_h_z: Complex64::new(0.0, 0.0),
            jj: Matrix2::zeros(),
            delta_corr: 0.0,
        }
    }

    fn build(radar: &RadarNode, z: &[Complex64], mean: &ObjectState, pos_cov: &Matrix2<f64>) -> Self {
        let sv = match steering_vector(radar, mean) {
            Ok(sv) => sv,
            Err(_) => return Self::blank(),
        };
        let mut s_h_z = Complex64::new(0.0, 0.0);
        for (s, zi) in sv.s.iter().zip(z) {
            s_h_z += s.conj() * zi;
        }
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
        let delta_corr = (pos_cov * jj).trace();
        Self { steering: Some(sv), s_h_z, jj, delta_corr }
    }
}

/// One radar's working state for the current snapshot: measurement, per-object
/// steering rows, cross-object Gram matrix, amplitude precisions and the joint
/// amplitude belief. Row order follows the tracker's object list.
pub struct AlphaContext {
    pub radar: RadarNode,
    pub z: Vec<Complex64>,
    pub z_energy: f64,
    /// Posterior mean of the measurement noise precision.
    pub lambda_z: f64,
    pub signals: Vec<ObjectSignal>,
    /// Expected steering Gram matrix: off-diagonal entries are S_k^H S_l at
    /// the state means, diagonal entries carry the uncertainty correction
    /// N_Z + tr(Sigma_pos J^H J). Rows of invisible objects are zero.
    pub gram: DMatrix<Complex64>,
    /// Floored means of the per-object amplitude precision gamma.
    pub gamma: Vec<f64>,
    pub alpha: AmplitudeBelief,
}

impl AlphaContext {
    /// Assemble the context for one radar snapshot. `rows` carries, per
    /// object, the state mean, position covariance and current gamma mean.
    /// The amplitude belief is seeded at the no-signal fixed point (zero mean,
    /// prior variance), so a leading gamma update leaves gamma unchanged.
    pub fn build(
        radar: RadarNode,
        z: Vec<Complex64>,
        lambda_z: f64,
        rows: &[(ObjectState, Matrix2<f64>, f64)],
    ) -> Self {
        let z_energy = z.iter().map(|v| v.norm_sqr()).sum();
        let mut ctx = Self {
            radar,
            z,
            z_energy,
            lambda_z,
            signals: Vec::with_capacity(rows.len()),
            gram: DMatrix::zeros(0, 0),
            gamma: Vec::with_capacity(rows.len()),
            alpha: AmplitudeBelief::empty(),
        };
        for (mean, pos_cov, gamma_mean) in rows {
            ctx.push_object(mean, pos_cov, *gamma_mean);
        }
        ctx
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    /// Append a new object row, seeding its amplitude at zero with prior
    /// variance 1/gamma.
    pub fn push_object(&mut self, mean: &ObjectState, pos_cov: &Matrix2<f64>, gamma_mean: f64) {
        let k = self.len();
        let sig = ObjectSignal::build(&self.radar, &self.z, mean, pos_cov);
        self.signals.push(sig);
        self.gamma.push(gamma_mean);
        self.gram = self.gram.clone().insert_row(k, Complex64::new(0.0, 0.0));
        self.gram = self.gram.clone().insert_column(k, Complex64::new(0.0, 0.0));
        self.alpha.mean = self.alpha.mean.clone().insert_row(k, Complex64::new(0.0, 0.0));
        self.alpha.cov = self.alpha.cov.clone().insert_row(k, Complex64::new(0.0, 0.0));
        self.alpha.cov = self.alpha.cov.clone().insert_column(k, Complex64::new(0.0, 0.0));
        self.alpha.cov[(k, k)] = Complex64::new(1.0 / gamma_mean.max(1e-300), 0.0);
        self.refresh_gram_row(k);
    }

    /// Drop an object's row, keeping the remaining order intact.
    pub fn remove_object(&mut self, k: usize) {
        self.signals.remove(k);
        self.gamma.remove(k);
        self.gram = self.gram.clone().remove_row(k).remove_column(k);
        self.alpha.mean = self.alpha.mean.clone().remove_row(k);
        self.alpha.cov = self.alpha.cov.clone().remove_row(k).remove_column(k);
    }

    /// Re-evaluate one object's steering at a new state mean and patch the
    /// Gram row and column.
    pub fn refresh_object(&mut self, k: usize, mean: &ObjectState, pos_cov: &Matrix2<f64>) {
        self.signals[k] = ObjectSignal::build(&self.radar, &self.z, mean, pos_cov);
        self.refresh_gram_row(k);
    }

    fn refresh_gram_row(&mut self, k: usize) {
        let n = self.len();
        let n_z = self.radar.n_z() as f64;
        for l in 0..n {
            if l == k {
                continue;
            }
            let dot = match (&self.signals[k].steering, &self.signals[l].steering) {
                (Some(a), Some(b)) => {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (sa, sb) in a.s.iter().zip(&b.s) {
                        acc += sa.conj() * sb;
                    }
                    acc
                }
                _ => Complex64::new(0.0, 0.0),
            };
            self.gram[(k, l)] = dot;
            self.gram[(l, k)] = dot.conj();
        }
        self.gram[(k, k)] = if self.signals[k].steering.is_some() {
            Complex64::new(n_z + self.signals[k].delta_corr, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        };
    }

    /// Snapshot minus the reconstructed contribution of every object except
    /// `skip`, using the current amplitude means weighted by existence.
    pub fn residual(&self, skip: Option<usize>, xi: &[f64]) -> Vec<Complex64> {
        let mut out = self.z.clone();
        for (k, sig) in self.signals.iter().enumerate() {
            if Some(k) == skip {
                continue;
            }
            let Some(sv) = &sig.steering else { continue };
            let w = self.alpha.mean[k] * xi[k];
            if w.norm_sqr() == 0.0 {
                continue;
            }
            for (o, s) in out.iter_mut().zip(&sv.s) {
                *o -= w * s;
            }
        }
        out
    }

    /// Existence-moment mask applied to the Gram matrix: diagonal xi_k,
    /// off-diagonal xi_k xi_l, reflecting E[xi^2] = xi for binary existence.
    fn masked_gram(&self, xi: &[f64]) -> DMatrix<Complex64> {
        let n = self.len();
        let mut m = self.gram.clone();
        for k in 0..n {
            for l in 0..n {
                let w = if k == l { xi[k] } else { xi[k] * xi[l] };
                m[(k, l)] *= w;
            }
        }
        m
    }

    /// Posterior precision of the joint amplitude vector at the given
    /// existence probabilities.
    fn amplitude_precision(&self, xi: &[f64]) -> DMatrix<Complex64> {
        let n = self.len();
        let mut p = self.masked_gram(xi);
        p *= Complex64::new(self.lambda_z, 0.0);
        for k in 0..n {
            p[(k, k)] += Complex64::new(self.gamma[k], 0.0);
        }
        p
    }

    /// Information vector lambda_z xi_k S_k^H Z driving the amplitude mean.
    fn amplitude_information(&self, xi: &[f64]) -> DVector<Complex64> {
        DVector::from_iterator(
            self.len(),
            self.signals
                .iter()
                .zip(xi)
                .map(|(sig, &x)| sig.s_h_z * Complex64::new(self.lambda_z * x, 0.0)),
        )
    }
}

/// Refit the joint amplitude belief at this radar: Gaussian posterior with
/// precision lambda_z (M o Gram) + diag(gamma) and matching information
/// vector. Invisible objects fall back to their zero-mean prior row.
pub fn update_alpha(ctx: &mut AlphaContext, xi: &[f64]) -> Result<(), EngineError> {
    if ctx.len() == 0 {
        ctx.alpha = AmplitudeBelief::empty();
        return Ok(());
    }
    let p = ctx.amplitude_precision(xi);
    let b = ctx.amplitude_information(xi);
    let chol = p.cholesky().ok_or(EngineError::IllConditionedAmplitude)?;
    ctx.alpha.mean = chol.solve(&b);
    ctx.alpha.cov = chol.inverse();
    Ok(())
}

/// One coordinate-ascent step of the amplitude precision gamma for object
/// `k`: the Gamma posterior blends the previous step's mean through the
/// forgetting weight eta with the current amplitude second moment.
pub fn update_gamma(ctx: &mut AlphaContext, k: usize, eta: f64, prev_mean: f64) -> crate::beliefs::GammaBelief {
    let shape = eta * prev_mean + 1.0;
    let rate = eta + ctx.alpha.second_moment(k);
    let belief = crate::beliefs::GammaBelief::new(shape, rate);
    ctx.gamma[k] = belief.floored_mean();
    belief
}

/// Evidence contribution of the existence vector at one radar: the amplitude
/// integral gives b^H P^-1 b - ln|P| up to xi-independent constants.
fn radar_xi_evidence(ctx: &AlphaContext, xi: &[f64]) -> f64 {
    let p = ctx.amplitude_precision(xi);
    let b = ctx.amplitude_information(xi);
    let chol = match p.cholesky() {
        Some(c) => c,
        // The precision is PD for xi in [0,1]^K by construction; a failed
        // factorization means a pathological conditioning, score it as bad.
        None => return f64::NEG_INFINITY,
    };
    let quad = b.dotc(&chol.solve(&b)).re;
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.re.ln()).sum::<f64>();
    quad - logdet
}

/// Joint existence objective: per-radar evidence summed over all contexts
/// plus the entropy and the survival-chain prior for every object.
pub fn xi_objective(ctxs: &[AlphaContext], xi: &[f64], xi_prev: &[f64], cfg: &ModelConfig) -> f64 {
    let mut total: f64 = ctxs.iter().map(|c| radar_xi_evidence(c, xi)).sum();
    for (x, xp) in xi.iter().zip(xi_prev) {
        total += binary_entropy(*x) + x * existence_prior_logit(*xp, cfg.p_s, cfg.p_b);
    }
    total
}

/// Maximize a scalar function on [lo, hi] with a coarse prescan followed by
/// golden-section refinement around the best cell.
pub(crate) fn line_maximize<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64) -> f64 {
    const CELLS: usize = 4;
    let step = (hi - lo) / CELLS as f64;
    let mut best = lo;
    let mut best_val = f(lo);
    for i in 1..=CELLS {
        let x = lo + step * i as f64;
        let v = f(x);
        if v > best_val {
            best_val = v;
            best = x;
        }
    }
    let mut a = (best - step).max(lo);
    let mut b = (best + step).min(hi);
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..40 {
        if b - a < 1e-5 {
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (a + b);
    // Keep whichever of the bracket midpoint and the prescan winner scores
    // higher; the endpoints 0 and 1 are common optima and must stay exact.
    if f(mid) >= best_val {
        mid
    } else {
        best
    }
}

/// Coordinate-ascent update of the existence probabilities: each coordinate
/// is line-searched on [0,1] against the joint objective, sweeping the object
/// list `sweeps` times. The amplitude beliefs in `ctxs` are not touched;
/// callers refit them at the returned xi.
pub fn update_xi(ctxs: &[AlphaContext], xi: &mut [f64], xi_prev: &[f64], cfg: &ModelConfig, sweeps: usize) {
    if xi.is_empty() {
        return;
    }
    for _ in 0..sweeps {
        for k in 0..xi.len() {
            let mut trial = xi.to_vec();
            let best = line_maximize(
                |x| {
                    trial[k] = x;
                    xi_objective(ctxs, &trial, xi_prev, cfg)
                },
                0.0,
                1.0,
            );
            xi[k] = best;
        }
    }
}

/// Accumulated residual-energy statistic for one radar's noise precision.
#[derive(Debug, Clone)]
pub struct LambdaZState {
    /// Running sum of expected residual energies over all processed steps.
    pub w: f64,
    /// Number of snapshots absorbed.
    pub steps: usize,
    pub belief: crate::beliefs::GammaBelief,
}

impl LambdaZState {
    pub fn new(cfg: &ModelConfig) -> Self {
        Self { w: 0.0, steps: 0, belief: crate::beliefs::GammaBelief::new(cfg.alpha_z, cfg.beta_z) }
    }
}

/// Fold the current snapshot's expected residual energy into the noise
/// precision posterior. The energy uses the same masked Gram as the amplitude
/// update, so existence uncertainty is counted once.
pub fn update_lambda_z(state: &mut LambdaZState, ctx: &AlphaContext, xi: &[f64], cfg: &ModelConfig) {
    let m = ctx.masked_gram(xi);
    let mean = &ctx.alpha.mean;
    let quad = if ctx.len() > 0 { mean.dotc(&(&m * mean)).re } else { 0.0 };
    let mut trace = 0.0;
    for k in 0..ctx.len() {
        for l in 0..ctx.len() {
            trace += (m[(k, l)] * ctx.alpha.cov[(l, k)]).re;
        }
    }
    let mut cross = 0.0;
    for (k, sig) in ctx.signals.iter().enumerate() {
        cross += xi[k] * (mean[k].conj() * sig.s_h_z).re;
    }
    state.w += ctx.z_energy + quad + trace - 2.0 * cross;
    state.steps += 1;
    let shape = match cfg.lambda_shape {
        crate::config::LambdaShape::DofConsistent => {
            ctx.radar.n_z() as f64 * state.steps as f64 + cfg.alpha_z
        }
        crate::config::LambdaShape::Literal => {
            ctx.radar.n_samples as f64 + state.steps as f64 + cfg.alpha_z
        }
    };
    state.belief = crate::beliefs::GammaBelief::new(shape, state.w + cfg.beta_z);
}

/// Convenience: position vector of a state.
pub(crate) fn position_of(state: &ObjectState) -> Vector2<f64> {
    Vector2::new(state.x, state.y)
}

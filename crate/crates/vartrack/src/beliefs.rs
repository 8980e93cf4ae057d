//! Belief and message containers for the variational tracker.
//!
//! State beliefs are Gaussian, reflectivity beliefs are complex Gaussian with
//! Gamma-distributed precision, and existence beliefs are Bernoulli means.
//! Messages between factor-graph nodes carry a mean and a precision matrix;
//! a rank-deficient precision is legal for messages (a data message only
//! constrains position) but not for a fused marginal.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::GAMMA_MEAN_FLOOR;
use crate::scenario::{g_matrix, t_matrix};
use crate::ObjectState;

#[derive(Debug, Error)]
pub enum BeliefError {
    #[error("degenerate message: {0}")]
    DegenerateMessage(&'static str),
}

/// Where a state message came from; used to assemble marginals per node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageSource {
    /// Likelihood message from the radar with this id.
    Data(u32),
    /// Transition message from the previous time step.
    Forward,
    /// Transition message from the next time step.
    Backward,
    /// Birth prior.
    Prior,
}

/// Gaussian message in information form. `precision` may be singular.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianMessage {
    pub mean: ObjectState,
    pub precision: Matrix4<f64>,
    pub source: MessageSource,
}

impl GaussianMessage {
    /// Build from moment form; fails when the covariance cannot be inverted.
    pub fn from_moments(
        mean: ObjectState,
        cov: Matrix4<f64>,
        source: MessageSource,
    ) -> Result<Self, BeliefError> {
        let precision = cov
            .cholesky()
            .map(|c| c.inverse())
            .ok_or(BeliefError::DegenerateMessage("covariance is not positive definite"))?;
        Ok(Self { mean, precision, source })
    }

    pub fn from_information(
        mean: ObjectState,
        precision: Matrix4<f64>,
        source: MessageSource,
    ) -> Self {
        Self { mean, precision, source }
    }
}

/// Gaussian state marginal in moment form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianBelief {
    pub mean: ObjectState,
    pub cov: Matrix4<f64>,
}

impl GaussianBelief {
    pub fn position_cov(&self) -> nalgebra::Matrix2<f64> {
        self.cov.fixed_view::<2, 2>(0, 0).into_owned()
    }
}

/// Multiply Gaussian messages and renormalize: precisions add, means combine
/// precision-weighted. The sum must be invertible even if the individual
/// messages are not.
pub fn fuse_state_marginal(messages: &[GaussianMessage]) -> Result<GaussianBelief, BeliefError> {
    if messages.is_empty() {
        return Err(BeliefError::DegenerateMessage("no messages to fuse"));
    }
    let mut precision = Matrix4::zeros();
    let mut shift = Vector4::zeros();
    for m in messages {
        precision += m.precision;
        shift += m.precision * m.mean;
    }
    let chol = precision
        .cholesky()
        .ok_or(BeliefError::DegenerateMessage("fused precision is not positive definite"))?;
    let mean = chol.solve(&shift);
    let cov = chol.inverse();
    Ok(GaussianBelief { mean, cov })
}

/// Which way a transition message travels along the time chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// From step n-1 into step n.
    Forward,
    /// From step n+1 into step n.
    Backward,
}

/// Transition message into a state node from one of its chain neighbors.
///
/// With transition phi_n = T·phi_{n-1} + G·a and a ~ N(0, diag(lambda)^-1),
/// the forward message is N(T·m, G·diag(lambda)^-1·G^T) and the backward
/// message is its pullback through T: mean T^-1·m, precision T^T·P_f·T.
/// Only the neighbor's mean enters: under the mean-field factorization the
/// neighbor marginal's spread is absorbed by the expectation and does not
/// widen the message.
pub fn transition_messages(
    neighbor_mean: &ObjectState,
    lambda_a_mean: &Vector4<f64>,
    dt: f64,
    direction: Direction,
) -> GaussianMessage {
    let g_inv = g_matrix(dt)
        .try_inverse()
        .expect("noise input matrix is diagonal positive for dt > 0");
    let forward_precision = g_inv.transpose() * Matrix4::from_diagonal(lambda_a_mean) * g_inv;
    match direction {
        Direction::Forward => GaussianMessage::from_information(
            t_matrix(dt) * neighbor_mean,
            forward_precision,
            MessageSource::Forward,
        ),
        Direction::Backward => {
            let t = t_matrix(dt);
            GaussianMessage::from_information(
                t_matrix(-dt) * neighbor_mean,
                t.transpose() * forward_precision * t,
                MessageSource::Backward,
            )
        }
    }
}

/// Gamma belief over a precision variable.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GammaBelief {
    pub shape: f64,
    pub rate: f64,
}

impl GammaBelief {
    pub fn new(shape: f64, rate: f64) -> Self {
        Self { shape, rate }
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    /// Mean clamped away from zero so downstream precision matrices stay
    /// invertible when a component's reflectivity collapses.
    pub fn floored_mean(&self) -> f64 {
        self.mean().max(GAMMA_MEAN_FLOOR)
    }
}

/// Joint complex-Gaussian belief over the reflectivities of all objects seen
/// by one radar. Dimension follows the current object count.
#[derive(Debug, Clone)]
pub struct AmplitudeBelief {
    pub mean: DVector<Complex64>,
    pub cov: DMatrix<Complex64>,
}

impl AmplitudeBelief {
    pub fn empty() -> Self {
        Self { mean: DVector::zeros(0), cov: DMatrix::zeros(0, 0) }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.len() == 0
    }

    /// Marginal variance of one reflectivity.
    pub fn variance(&self, k: usize) -> f64 {
        self.cov[(k, k)].re
    }

    /// E|alpha_k|^2 = |mean|^2 + variance.
    pub fn second_moment(&self, k: usize) -> f64 {
        self.mean[k].norm_sqr() + self.variance(k)
    }
}

/// Bernoulli existence belief.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExistenceBelief {
    pub prob: f64,
}

impl ExistenceBelief {
    pub fn new(prob: f64) -> Self {
        Self { prob: prob.clamp(0.0, 1.0) }
    }

    /// One survival/birth step of the existence chain:
    /// p' = p_s·p + p_b·(1 - p).
    pub fn propagate(&self, p_survival: f64, p_birth: f64) -> Self {
        Self::new(p_survival * self.prob + p_birth * (1.0 - self.prob))
    }
}

/// Binary entropy in nats, with 0·ln 0 = 0.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.ln() };
    term(p) + term(1.0 - p)
}

/// logit(p_s) - logit(p_b) scaled existence prior term:
/// g(x) = x·(logit p_s - logit p_b) + logit p_b.
pub fn existence_prior_logit(x: f64, p_survival: f64, p_birth: f64) -> f64 {
    let logit = |p: f64| (p / (1.0 - p)).ln();
    x * (logit(p_survival) - logit(p_birth)) + logit(p_birth)
}

//! Variational tracking engine.
//!
//! One [`TrackStore`] holds the consensus belief state shared by all radar
//! nodes: tracked objects with their archived per-step messages, per-radar
//! amplitude precision chains, acceleration precision posteriors and noise
//! precision posteriors. [`vmp_step`] absorbs one set of snapshots by
//! coordinate-ascent over the factorized surrogate: amplitudes and their
//! precisions per radar, a measurement-side state message per object and
//! radar exchanged over the wire, trajectory re-smoothing with process noise
//! refits, a joint existence update, pruning, noise precision bookkeeping and
//! finally new-object initialization in ring order.
//!
//! Only the current snapshots are touched; earlier measurements survive as
//! archived Gaussian state messages attached to their time step.

mod alpha;
mod data;
mod init;
mod noise;

pub use alpha::{
    update_alpha, update_gamma, update_lambda_z, update_xi, xi_objective, AlphaContext,
    LambdaZState, ObjectSignal,
};
pub use data::compute_data_message;
pub use noise::{lambda_a_means, update_process_noise};

use std::collections::BTreeMap;

use nalgebra::{Matrix2, Matrix4};
use thiserror::Error;

use crate::beliefs::{
    fuse_state_marginal, BeliefError, ExistenceBelief, GammaBelief, GaussianBelief,
    GaussianMessage,
};
use crate::bus::{broadcast_state_messages, run_init_ring, NodePool, Payload, WireMessage, STATE_WIRE_LEN};
use crate::config::ModelConfig;
use crate::scenario::{g_matrix, t_matrix};
use crate::signal::{RadarNode, Snapshot};
use crate::ObjectState;

#[derive(Debug, Error)]
pub enum EngineError {
    /// The snapshot carries no usable information about an object's position;
    /// the radar's message is skipped for this step.
    #[error("uninformative data message")]
    UninformativeDataMessage,
    /// The joint amplitude precision failed to factorize.
    #[error("ill-conditioned amplitude update")]
    IllConditionedAmplitude,
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

/// One time step of one object: the archived messages and the fitted belief.
/// The data messages are kept forever so trajectory smoothing can revisit any
/// step without the original measurements.
#[derive(Debug, Clone)]
pub struct StepNode {
    pub time_index: usize,
    /// Birth prior; only the first node of an object carries one.
    pub prior: Option<GaussianMessage>,
    /// Measurement-side state messages, one per radar that had something to
    /// say at this step.
    pub data: Vec<GaussianMessage>,
    pub belief: GaussianBelief,
    /// Existence probability fitted at this step.
    pub xi: f64,
}

/// Per-radar chain state of one object: the amplitude precision posterior and
/// the previous step's mean anchoring the current update.
#[derive(Debug, Clone)]
pub struct RadarTrackState {
    pub gamma: GammaBelief,
    pub gamma_prev_mean: f64,
}

/// One tracked object: its step archive, existence probability, acceleration
/// precision posteriors and per-radar amplitude chains.
#[derive(Debug, Clone)]
pub struct TrackedObject {
    pub id: u32,
    pub birth_index: usize,
    pub xi: f64,
    /// Previous step's fitted existence, anchoring the survival chain.
    pub xi_prev: f64,
    pub nodes: Vec<StepNode>,
    pub lambda_a: [GammaBelief; 4],
    pub per_radar: BTreeMap<u32, RadarTrackState>,
}

impl TrackedObject {
    pub fn new(id: u32, birth_index: usize, cfg: &ModelConfig, radars: &[RadarNode]) -> Self {
        let lambda_a = std::array::from_fn(|_| GammaBelief::new(cfg.zeta / 2.0, cfg.chi / 2.0));
        let per_radar = radars
            .iter()
            .map(|r| {
                (
                    r.id,
                    RadarTrackState {
                        gamma: GammaBelief::new(1.0, 1.0 / cfg.gamma_init),
                        gamma_prev_mean: cfg.gamma_init,
                    },
                )
            })
            .collect();
        Self { id, birth_index, xi: 0.0, xi_prev: 0.0, nodes: Vec::new(), lambda_a, per_radar }
    }

    pub fn current_belief(&self) -> &GaussianBelief {
        &self.nodes.last().expect("tracked object has at least one node").belief
    }
}

/// Consensus tracker state. Every radar node runs the identical deterministic
/// schedule on the identical message stream, so one store stands for all
/// replicas.
pub struct TrackStore {
    pub cfg: ModelConfig,
    pub radars: Vec<RadarNode>,
    pub pool: NodePool,
    pub objects: Vec<TrackedObject>,
    pub retired: Vec<TrackedObject>,
    pub time_index: Option<usize>,
    pub next_object_id: u32,
    pub lambda_z: BTreeMap<u32, LambdaZState>,
    pub bytes_sent_last_step: usize,
}

impl TrackStore {
    pub fn new(cfg: ModelConfig, radars: Vec<RadarNode>, pool: NodePool) -> Self {
        let lambda_z = radars.iter().map(|r| (r.id, LambdaZState::new(&cfg))).collect();
        Self {
            cfg,
            radars,
            pool,
            objects: Vec::new(),
            retired: Vec::new(),
            time_index: None,
            next_object_id: 0,
            lambda_z,
            bytes_sent_last_step: 0,
        }
    }
}

/// What one step did, for logging and driver bookkeeping.
#[derive(Debug, Clone, Copy)]
pub struct StepSummary {
    pub time_index: usize,
    pub live_objects: usize,
    pub admitted: usize,
    pub pruned: usize,
    pub bytes_sent: usize,
}

/// Current state estimates: live objects whose existence probability exceeds
/// the threshold, with their object ids.
pub fn estimates(store: &TrackStore, threshold: f64) -> Vec<(u32, ObjectState)> {
    store
        .objects
        .iter()
        .filter(|o| o.xi > threshold)
        .map(|o| (o.id, o.current_belief().mean))
        .collect()
}

/// Push a batch of state messages through the wire and collect them back as
/// one consensus delivery: the lowest-id sender's inbox plus its own frames,
/// everything decoded through the codec. Returns (object id, message) pairs
/// and the wire bytes spent.
pub(crate) fn exchange_state_messages(
    pool: &NodePool,
    step: usize,
    time_index: u32,
    locals: &BTreeMap<u32, Vec<(u32, GaussianMessage)>>,
) -> (Vec<(u32, GaussianMessage)>, usize) {
    if locals.is_empty() {
        return (Vec::new(), 0);
    }
    let mailboxes = broadcast_state_messages(pool, step, time_index, locals);
    let bytes = mailboxes.values().map(|v| v.len()).sum::<usize>() * STATE_WIRE_LEN;
    let first = *locals.keys().next().expect("locals is non-empty");
    let mut delivered = Vec::new();
    if let Some(own) = locals.get(&first) {
        for (oid, m) in own {
            let frame = WireMessage {
                object_id: *oid,
                time_index,
                sender: first,
                payload: Payload::State { mean: m.mean, precision: m.precision },
            };
            let back = WireMessage::decode(&frame.encode()).expect("own frame decodes");
            if let Some(msg) = back.to_state_message() {
                delivered.push((back.object_id, msg));
            }
        }
    }
    if let Some(mb) = mailboxes.get(&first) {
        for w in mb {
            if let Some(msg) = w.to_state_message() {
                delivered.push((w.object_id, msg));
            }
        }
    }
    (delivered, bytes)
}

/// One forward-filter, backward-smoother sweep over nodes `w0..=last`, using
/// each node's archived prior and measurement messages as its evidence.
///
/// Predictions carry the full marginal covariance T·Σ·Tᵀ + G·Λ̄⁻¹·Gᵀ. A
/// transition message built from the neighbor's mean alone pins every node to
/// it at the raw process-noise scale, millimeters per step, and the chain can
/// never follow a moving object; propagating the velocity uncertainty into
/// the position block is what lets the evidence pull the trajectory.
fn smooth_pass(obj: &mut TrackedObject, w0: usize, dt: f64) -> Result<(), EngineError> {
    let last = obj.nodes.len() - 1;
    let t = t_matrix(dt);
    let g = g_matrix(dt);
    let la = lambda_a_means(&obj.lambda_a);
    let q = g * Matrix4::from_diagonal(&la.map(|l| 1.0 / l)) * g.transpose();

    let count = last - w0 + 1;
    let mut filtered: Vec<GaussianBelief> = Vec::with_capacity(count);
    let mut predicted: Vec<Option<(ObjectState, Matrix4<f64>)>> = Vec::with_capacity(count);
    for i in w0..=last {
        let pred = if i == 0 {
            None
        } else {
            let prev = if i == w0 { &obj.nodes[i - 1].belief } else { &filtered[i - 1 - w0] };
            (t * prev.mean, t * prev.cov * t.transpose() + q).into()
        };
        let mut msgs: Vec<GaussianMessage> = Vec::with_capacity(obj.nodes[i].data.len() + 2);
        if let Some((m, c)) = &pred {
            msgs.push(GaussianMessage::from_moments(*m, *c, crate::beliefs::MessageSource::Forward)?);
        }
        if let Some(p) = &obj.nodes[i].prior {
            msgs.push(p.clone());
        }
        msgs.extend(obj.nodes[i].data.iter().cloned());
        filtered.push(fuse_state_marginal(&msgs)?);
        predicted.push(pred);
    }

    let mut next = filtered[count - 1].clone();
    obj.nodes[last].belief = next.clone();
    for i in (w0..last).rev() {
        let f = &filtered[i - w0];
        let (pm, pc) = predicted[i + 1 - w0].as_ref().expect("interior node has a prediction");
        let pinv = pc
            .cholesky()
            .ok_or(BeliefError::DegenerateMessage("prediction covariance is not positive definite"))?
            .inverse();
        let gain = f.cov * t.transpose() * pinv;
        let mean = f.mean + gain * (next.mean - pm);
        let cov = f.cov + gain * (next.cov - pc) * gain.transpose();
        next = GaussianBelief { mean, cov: (cov + cov.transpose()) * 0.5 };
        obj.nodes[i].belief = next.clone();
    }
    Ok(())
}

/// Iterated trajectory smoothing: sweep the window, then refit the
/// acceleration precisions from the refreshed beliefs; repeat. Nodes before
/// the window stay frozen and anchor it.
fn smooth_object(obj: &mut TrackedObject, cfg: &ModelConfig, dt: f64) -> Result<(), EngineError> {
    let last = obj.nodes.len() - 1;
    let w0 = match cfg.smoothing_window {
        Some(w) => (last + 1).saturating_sub(w.max(1)),
        None => 0,
    };
    for _ in 0..cfg.n_i2 {
        smooth_pass(obj, w0, dt)?;
        let beliefs: Vec<GaussianBelief> = obj.nodes.iter().map(|n| n.belief.clone()).collect();
        update_process_noise(&beliefs, cfg, dt, &mut obj.lambda_a);
    }
    Ok(())
}

/// Predicted state marginal for the coming step: the previous belief pushed
/// through the motion model with the current acceleration precisions. The
/// position block gates the measurement-side MAP search, so it must carry the
/// velocity uncertainty even though the transition message itself does not.
fn predicted_marginal(
    prev: &GaussianBelief,
    lambda_a: &[GammaBelief; 4],
    dt: f64,
) -> (ObjectState, Matrix4<f64>) {
    let t = t_matrix(dt);
    let g = g_matrix(dt);
    let la = lambda_a_means(lambda_a);
    let noise = Matrix4::from_diagonal(&la.map(|l| 1.0 / l));
    let cov = t * prev.cov * t.transpose() + g * noise * g.transpose();
    (t * prev.mean, cov)
}

/// Absorb one step's snapshots into the store. `snapshots` must carry the
/// current `time_index`; radars without a snapshot or dropped from the pool
/// simply contribute nothing this step. Steps must be fed in order.
pub fn vmp_step(
    store: &mut TrackStore,
    snapshots: &[Snapshot],
    time_index: usize,
) -> Result<StepSummary, EngineError> {
    let expected = store.time_index.map_or(0, |t| t + 1);
    assert_eq!(time_index, expected, "time steps must be processed in order");
    let dt = store.cfg.dt();
    let cfg = store.cfg.clone();
    store.bytes_sent_last_step = 0;

    // Open the new step: predict every live object forward and propagate its
    // existence through the survival chain.
    let mut predictions: Vec<GaussianMessage> = Vec::with_capacity(store.objects.len());
    for obj in &mut store.objects {
        let (mean, cov) = predicted_marginal(obj.current_belief(), &obj.lambda_a, dt);
        let pred = GaussianMessage::from_moments(mean, cov, crate::beliefs::MessageSource::Forward)?;
        predictions.push(pred);
        obj.xi_prev = obj.xi;
        obj.xi = ExistenceBelief::new(obj.xi).propagate(cfg.p_s, cfg.p_b).prob;
        for rs in obj.per_radar.values_mut() {
            rs.gamma_prev_mean = rs.gamma.mean();
        }
        obj.nodes.push(StepNode {
            time_index,
            prior: None,
            data: Vec::new(),
            belief: GaussianBelief { mean, cov },
            xi: obj.xi,
        });
    }

    // Per-radar working contexts for every active radar that delivered a
    // snapshot, in radar-list order.
    let active = store.pool.active(time_index);
    let mut ctxs: Vec<AlphaContext> = Vec::new();
    for radar in &store.radars {
        if !active.contains(&radar.id) {
            continue;
        }
        let Some(snap) = snapshots
            .iter()
            .find(|s| s.radar_id == radar.id && s.time_index == time_index)
        else {
            continue;
        };
        let lz = store.lambda_z[&radar.id].belief.mean();
        let rows: Vec<(ObjectState, Matrix2<f64>, f64)> = store
            .objects
            .iter()
            .map(|o| {
                let b = o.current_belief();
                (b.mean, b.position_cov(), o.per_radar[&radar.id].gamma.floored_mean())
            })
            .collect();
        ctxs.push(AlphaContext::build(radar.clone(), snap.z.clone(), lz, &rows));
    }

    // Amplitude block: alternate the precision chain and the joint amplitude
    // fit at every radar.
    let xi_work: Vec<f64> = store.objects.iter().map(|o| o.xi).collect();
    for _ in 0..cfg.n_i1 {
        for ctx in &mut ctxs {
            for k in 0..store.objects.len() {
                let anchor = store.objects[k].per_radar[&ctx.radar.id].gamma_prev_mean;
                let gb = update_gamma(ctx, k, cfg.eta, anchor);
                store.objects[k]
                    .per_radar
                    .get_mut(&ctx.radar.id)
                    .expect("per-radar state exists for every radar")
                    .gamma = gb;
            }
            update_alpha(ctx, &xi_work)?;
        }
    }

    // State block, object by object: every radar computes its measurement
    // message, the messages cross the wire, and the trajectory is re-smoothed
    // with the new evidence before the next object is treated.
    for k in 0..store.objects.len() {
        let object_id = store.objects[k].id;
        let mut locals: BTreeMap<u32, Vec<(u32, GaussianMessage)>> = BTreeMap::new();
        for ctx in &ctxs {
            match compute_data_message(&cfg, ctx, k, &xi_work, &predictions[k]) {
                Ok(msg) => {
                    locals.insert(ctx.radar.id, vec![(object_id, msg)]);
                }
                Err(EngineError::UninformativeDataMessage) => {}
                Err(e) => return Err(e),
            }
        }
        let (delivered, bytes) =
            exchange_state_messages(&store.pool, time_index, time_index as u32, &locals);
        store.bytes_sent_last_step += bytes;
        let node = store.objects[k].nodes.last_mut().expect("step node was just pushed");
        for (oid, msg) in delivered {
            if oid == object_id {
                node.data.push(msg);
            }
        }
        smooth_object(&mut store.objects[k], &cfg, dt)?;
        let b = store.objects[k].current_belief().clone();
        for ctx in &mut ctxs {
            ctx.refresh_object(k, &b.mean, &b.position_cov());
        }
    }

    // Joint existence refit and the matching amplitude refresh.
    let mut xi_all: Vec<f64> = store.objects.iter().map(|o| o.xi).collect();
    let xi_prev_all: Vec<f64> = store.objects.iter().map(|o| o.xi_prev).collect();
    update_xi(&ctxs, &mut xi_all, &xi_prev_all, &cfg, 2);
    for (obj, &x) in store.objects.iter_mut().zip(&xi_all) {
        obj.xi = x;
        if let Some(n) = obj.nodes.last_mut() {
            n.xi = x;
        }
    }
    for ctx in &mut ctxs {
        update_alpha(ctx, &xi_all)?;
    }

    // Prune tracks whose existence collapsed.
    let mut pruned = 0usize;
    let mut k = 0usize;
    while k < store.objects.len() {
        if store.objects[k].xi < cfg.delta_minus {
            let obj = store.objects.remove(k);
            store.retired.push(obj);
            for ctx in &mut ctxs {
                ctx.remove_object(k);
            }
            pruned += 1;
        } else {
            k += 1;
        }
    }
    let xi_live: Vec<f64> = store.objects.iter().map(|o| o.xi).collect();
    if pruned > 0 {
        for ctx in &mut ctxs {
            update_alpha(ctx, &xi_live)?;
        }
    }

    // Fold this step's residual energy into each radar's noise precision.
    for ctx in &ctxs {
        let st = store
            .lambda_z
            .get_mut(&ctx.radar.id)
            .expect("noise state exists for every radar");
        update_lambda_z(st, ctx, &xi_live, &cfg);
    }

    // New-object initialization: the nodes take turns scanning their residual
    // and the last one in the ring broadcasts the consensus candidate set.
    let before = store.objects.len();
    let pool = store.pool.clone();
    let (_consensus, init_bytes) = run_init_ring(&pool, time_index, time_index as u32, |node, _| {
        init::node_detections(store, &mut ctxs, node, time_index)
    });
    store.bytes_sent_last_step += init_bytes;
    let admitted = store.objects.len() - before;

    debug_assert!(ctxs.iter().all(|c| c.len() == store.objects.len()));
    store.time_index = Some(time_index);
    Ok(StepSummary {
        time_index,
        live_objects: store.objects.len(),
        admitted,
        pruned,
        bytes_sent: store.bytes_sent_last_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{reflection_magnitude, synthesize_snapshot};
    use nalgebra::{Vector2, Vector4};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn two_radar_store(cfg: &ModelConfig) -> TrackStore {
        let radars = vec![
            RadarNode::from_config(cfg, 0, Vector2::new(-50.0, 0.0), 0.0),
            RadarNode::from_config(cfg, 1, Vector2::new(50.0, 0.0), 0.0),
        ];
        let pool = NodePool::new(vec![0, 1]);
        TrackStore::new(cfg.clone(), radars, pool)
    }

    fn drive<R: Rng>(
        store: &mut TrackStore,
        truth: Option<(&mut ObjectState, Vector2<f64>)>,
        steps: usize,
        rng: &mut R,
    ) {
        let cfg = store.cfg.clone();
        let dt = cfg.dt();
        let radars = store.radars.clone();
        let (mut state, vel) = match truth {
            Some((s, v)) => (Some(s), v),
            None => (None, Vector2::new(0.0, 0.0)),
        };
        let start = store.time_index.map_or(0, |t| t + 1);
        for n in start..start + steps {
            let mut snaps = Vec::new();
            for radar in &radars {
                let objs: Vec<(ObjectState, Complex64, bool)> = match &state {
                    Some(s) => {
                        let range = (Vector2::new(s.x, s.y) - radar.position).norm();
                        let mag = reflection_magnitude(&cfg, range, cfg.mean_rcs_m2);
                        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                        vec![(**s, Complex64::from_polar(mag, phase), true)]
                    }
                    None => vec![],
                };
                snaps.push(synthesize_snapshot(&objs, radar, 1.0 / cfg.noise_variance, n, rng));
            }
            vmp_step(store, &snaps, n).expect("step succeeds");
            if let Some(s) = state.as_deref_mut() {
                s.z = vel.x;
                s.w = vel.y;
                *s = crate::scenario::cv_step(s, dt, &Vector4::zeros());
            }
        }
    }

    #[test]
    fn tracks_a_constant_velocity_object() {
        let cfg = ModelConfig::default();
        let mut store = two_radar_store(&cfg);
        let mut truth = Vector4::new(-2.0, 62.0, 4.0, 0.0);
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let steps = 10;
        drive(&mut store, Some((&mut truth, Vector2::new(4.0, 0.0))), steps, &mut rng);
        let est = estimates(&store, cfg.delta_est);
        assert_eq!(est.len(), 1, "expected one confirmed track");
        // `truth` has been advanced one step past the last snapshot.
        let at_last = truth - Vector4::new(4.0 * cfg.dt(), 0.0, 0.0, 0.0);
        let pos_err = (est[0].1.xy() - at_last.xy()).norm();
        assert!(pos_err < 0.5, "position error {pos_err:.3} m");
        let vel_err = ((est[0].1.z - 4.0).powi(2) + est[0].1.w.powi(2)).sqrt();
        assert!(vel_err < 2.0, "velocity error {vel_err:.3} m/s");
    }

    #[test]
    fn noise_only_admits_nothing() {
        let cfg = ModelConfig::default();
        let mut store = two_radar_store(&cfg);
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        drive(&mut store, None, 6, &mut rng);
        assert!(store.objects.is_empty(), "spurious tracks: {}", store.objects.len());
    }

    #[test]
    fn replay_is_bit_identical() {
        let cfg = ModelConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(43);
        let radars = vec![
            RadarNode::from_config(&cfg, 0, Vector2::new(-50.0, 0.0), 0.0),
            RadarNode::from_config(&cfg, 1, Vector2::new(50.0, 0.0), 0.0),
        ];
        let mut truth = Vector4::new(5.0, 70.0, -3.0, 1.0);
        let mut all_snaps: Vec<Vec<Snapshot>> = Vec::new();
        for n in 0..6 {
            let mut snaps = Vec::new();
            for radar in &radars {
                let range = (Vector2::new(truth.x, truth.y) - radar.position).norm();
                let mag = reflection_magnitude(&cfg, range, cfg.mean_rcs_m2);
                let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let objs = vec![(truth, Complex64::from_polar(mag, phase), true)];
                snaps.push(synthesize_snapshot(&objs, radar, 1.0 / cfg.noise_variance, n, &mut rng));
            }
            all_snaps.push(snaps);
            truth = crate::scenario::cv_step(&truth, cfg.dt(), &Vector4::zeros());
        }
        let run = |snaps: &[Vec<Snapshot>]| {
            let mut store = TrackStore::new(
                cfg.clone(),
                radars.clone(),
                NodePool::new(vec![0, 1]),
            );
            for (n, s) in snaps.iter().enumerate() {
                vmp_step(&mut store, s, n).unwrap();
            }
            (
                estimates(&store, cfg.delta_est),
                store.objects.iter().map(|o| o.xi).collect::<Vec<_>>(),
            )
        };
        let (est_a, xi_a) = run(&all_snaps);
        let (est_b, xi_b) = run(&all_snaps);
        assert_eq!(est_a.len(), est_b.len());
        for (a, b) in est_a.iter().zip(&est_b) {
            assert_eq!(a.0, b.0);
            assert_eq!(a.1, b.1, "state estimates must replay bit-identically");
        }
        assert_eq!(xi_a, xi_b);
    }
}

//! Ground-truth scenes: constant-velocity trajectories, RCS fluctuation models
//! and the three benchmark scenarios (crossing, parallel, handover).

use nalgebra::{Matrix4, Vector2, Vector4};
use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaDist, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::signal::RadarNode;
use crate::ObjectState;

/// RCS fluctuation model for the complex weight magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RcsModel {
    /// Non-fluctuating: every dwell sees the mean RCS.
    Swerling0,
    /// Chi-square with four degrees of freedom: p(s) = 4s/m^2 · exp(-2s/m),
    /// drawn independently per (object, step, radar).
    Swerling3,
}

/// One object's ground-truth states over its lifetime.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    /// states[i] is the state at time index birth_index + i.
    pub states: Vec<ObjectState>,
    pub birth_index: usize,
    pub death_index: usize,
}

impl Trajectory {
    pub fn state_at(&self, n: usize) -> Option<&ObjectState> {
        if n < self.birth_index || n > self.death_index {
            None
        } else {
            self.states.get(n - self.birth_index)
        }
    }

    pub fn alive_at(&self, n: usize) -> bool {
        n >= self.birth_index && n <= self.death_index
    }
}

/// A complete simulation scene: truth trajectories plus the radar network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scene {
    pub trajectories: Vec<Trajectory>,
    pub radars: Vec<RadarNode>,
    /// Tracking interval [s].
    pub dt: f64,
    /// Scene length [s].
    pub duration_s: f64,
    pub rcs_model: RcsModel,
    pub mean_rcs_m2: f64,
    /// Per-sample complex noise variance at every radar.
    pub noise_variance: f64,
}

impl Scene {
    pub fn n_steps(&self) -> usize {
        (self.duration_s / self.dt).round() as usize
    }

    /// True if every trajectory stays within `r_max` of at least one radar for
    /// its whole lifetime.
    pub fn coverage_ok(&self, r_max: f64) -> bool {
        self.trajectories.iter().all(|t| {
            t.states.iter().all(|s| {
                let p = Vector2::new(s.x, s.y);
                self.radars.iter().any(|r| (p - r.position).norm() <= r_max)
            })
        })
    }

    /// Ground-truth positions of the objects alive at time index n.
    pub fn truth_positions(&self, n: usize) -> Vec<Vector2<f64>> {
        self.trajectories
            .iter()
            .filter_map(|t| t.state_at(n).map(|s| Vector2::new(s.x, s.y)))
            .collect()
    }
}

/// Constant-velocity transition matrix T.
pub fn t_matrix(dt: f64) -> Matrix4<f64> {
    let mut t = Matrix4::identity();
    t[(0, 2)] = dt;
    t[(1, 3)] = dt;
    t
}

/// Noise input matrix G (diagonal): a 4-dim noise/acceleration vector feeds
/// positions through dt^2/2 and velocities through dt.
pub fn g_matrix(dt: f64) -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(dt * dt / 2.0, dt * dt / 2.0, dt, dt))
}

/// One constant-velocity step: phi' = T·phi + G·a.
pub fn cv_step(phi: &ObjectState, dt: f64, a: &Vector4<f64>) -> ObjectState {
    t_matrix(dt) * phi + g_matrix(dt) * a
}

/// Draw one RCS value [m^2].
pub fn sample_rcs<R: Rng + ?Sized>(model: RcsModel, mean_rcs: f64, rng: &mut R) -> f64 {
    match model {
        RcsModel::Swerling0 => mean_rcs,
        RcsModel::Swerling3 => GammaDist::new(2.0, mean_rcs / 2.0)
            .expect("mean_rcs must be positive")
            .sample(rng),
    }
}

/// Orientation that points a radar's boresight (local +y) at `target`.
fn orientation_toward(position: Vector2<f64>, target: Vector2<f64>) -> f64 {
    let d = target - position;
    f64::atan2(-d.x, d.y)
}

/// The four-radar layout shared by the crossing and parallel scenes, boresights
/// on the scene center.
fn ring_radars(cfg: &ModelConfig, center: Vector2<f64>) -> Vec<RadarNode> {
    let positions = [
        Vector2::new(-100.0, 160.0),
        Vector2::new(10.0, 50.0),
        Vector2::new(-100.0, -60.0),
        Vector2::new(-210.0, 50.0),
    ];
    positions
        .iter()
        .enumerate()
        .map(|(i, &p)| RadarNode::from_config(cfg, i as u32, p, orientation_toward(p, center)))
        .collect()
}

/// Three objects starting on random thirds of a 60 m circle, heading through
/// the center at 6 m/s, with constant-velocity process noise of precision 6.25
/// on each noise axis. Births are uniform over the first two seconds.
pub fn make_crossing_scene<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Scene {
    let center = Vector2::new(-100.0, 50.0);
    let radius = 60.0;
    let speed = 6.0;
    let dt = cfg.dt();
    let n_steps = (20.0 / dt).round() as usize;
    let birth_window = (2.0 / dt).round() as usize;
    let lambda_a: f64 = 6.25;
    let noise_sd = (1.0 / lambda_a).sqrt();

    let mut trajectories = Vec::with_capacity(3);
    for third in 0..3 {
        let angle = (third as f64 + rng.gen::<f64>()) * std::f64::consts::TAU / 3.0;
        let dir = Vector2::new(angle.cos(), angle.sin());
        let birth = rng.gen_range(0..birth_window);
        let death = n_steps - 1;
        let mut state = ObjectState::new(
            center.x + radius * dir.x,
            center.y + radius * dir.y,
            -speed * dir.x,
            -speed * dir.y,
        );
        let mut states = vec![state];
        for _ in birth..death {
            let a = Vector4::from_fn(|_, _| {
                let n: f64 = rng.sample(StandardNormal);
                n * noise_sd
            });
            state = cv_step(&state, dt, &a);
            states.push(state);
        }
        trajectories.push(Trajectory { states, birth_index: birth, death_index: death });
    }

    Scene {
        trajectories,
        radars: ring_radars(cfg, center),
        dt,
        duration_s: 20.0,
        rcs_model: RcsModel::Swerling0,
        mean_rcs_m2: cfg.mean_rcs_m2,
        noise_variance: cfg.noise_variance,
    }
}

/// Deterministic two-object scene: the objects close from 15 m to 1.5 m of
/// lateral separation, run parallel, then open up again.
///
/// The closing legs are realized as 11 steps of 30/11 m/s^2 lateral
/// acceleration starting at step 17; that is the discrete-time maneuver with
/// per-step kinematics phi' = T·phi + G·a that ends the approach with exactly
/// 1.5 m left between the tracks (each object sheds 6.75 m of lateral travel:
/// 0.3·n0 + 0.15·M with 2·n0 + M = 45). The mirrored maneuver at step 170
/// reopens the tracks.
pub fn make_parallel_scene(cfg: &ModelConfig) -> Scene {
    let dt = cfg.dt();
    let n_steps = (20.0 / dt).round() as usize;
    let accel = 30.0 / 11.0;
    let close_steps = 17..=27;
    let open_steps = 170..=180;

    let mut trajectories = Vec::with_capacity(2);
    for (y0, sign) in [(57.0, 1.0), (42.0, -1.0)] {
        // sign = +1 for the upper object: it decelerates downward motion, then
        // accelerates upward to separate.
        let mut state = ObjectState::new(-129.0, y0, 3.0, -3.0 * sign);
        let mut states = vec![state];
        for n in 0..n_steps - 1 {
            let ay = if close_steps.contains(&n) || open_steps.contains(&n) {
                accel * sign
            } else {
                0.0
            };
            let a = Vector4::new(0.0, ay, 0.0, ay);
            state = cv_step(&state, dt, &a);
            states.push(state);
        }
        trajectories.push(Trajectory { states, birth_index: 0, death_index: n_steps - 1 });
    }

    Scene {
        trajectories,
        radars: ring_radars(cfg, Vector2::new(-100.0, 50.0)),
        dt,
        duration_s: 20.0,
        rcs_model: RcsModel::Swerling3,
        mean_rcs_m2: cfg.mean_rcs_m2,
        noise_variance: cfg.noise_variance,
    }
}

/// One object flying a constant-velocity line past a row of four radars, each
/// of which observes it for only part of the pass: the track must be handed
/// over between nodes. 600 time indices at the default PRF.
pub fn make_handover_scene(cfg: &ModelConfig) -> Scene {
    let dt = cfg.dt();
    let n_steps = 600;
    let v = Vector2::new(-8.75, 0.0);
    let mut state = ObjectState::new(319.0, 75.0, v.x, v.y);
    let mut states = vec![state];
    for _ in 0..n_steps - 1 {
        state = cv_step(&state, dt, &Vector4::zeros());
        states.push(state);
    }
    let radars = (0..4)
        .map(|i| {
            let p = Vector2::new(-100.0 + i as f64 * 110.0, 0.0);
            RadarNode::from_config(cfg, i as u32, p, 0.0)
        })
        .collect();
    Scene {
        trajectories: vec![Trajectory { states, birth_index: 0, death_index: n_steps - 1 }],
        radars,
        dt,
        duration_s: n_steps as f64 * dt,
        rcs_model: RcsModel::Swerling0,
        mean_rcs_m2: cfg.mean_rcs_m2,
        noise_variance: cfg.noise_variance,
    }
}

/// An object-free scene on the crossing layout, for false-alarm measurement.
pub fn make_noise_scene(cfg: &ModelConfig, duration_s: f64) -> Scene {
    Scene {
        trajectories: vec![],
        radars: ring_radars(cfg, Vector2::new(-100.0, 50.0)),
        dt: cfg.dt(),
        duration_s,
        rcs_model: RcsModel::Swerling0,
        mean_rcs_m2: cfg.mean_rcs_m2,
        noise_variance: cfg.noise_variance,
    }
}

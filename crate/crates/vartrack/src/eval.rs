//! OSPA scoring, error decomposition and Monte-Carlo aggregation.
//!
//! [`ospa`] compares truth and estimate position sets per time index;
//! [`run_scene`] drives the tracker over one synthesized scene and records a
//! per-step [`RunRecord`]; [`monte_carlo`] repeats that over seeded runs in
//! parallel and aggregates mean curves and runtime statistics.

use std::f64::consts::TAU;
use std::io::Write as IoWrite;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{Matrix4, Vector2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bus::NodePool;
use crate::config::ModelConfig;
use crate::engine::{estimates, vmp_step, EngineError, TrackStore};
use crate::scenario::{sample_rcs, Scene};
use crate::signal::{reflection_magnitude, synthesize_snapshot};
use crate::ObjectState;

/// OSPA metric parameters: cutoff distance and norm order.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OspaConfig {
    pub cutoff_m: f64,
    pub order: f64,
}

impl Default for OspaConfig {
    fn default() -> Self {
        Self { cutoff_m: 5.0, order: 2.0 }
    }
}

/// Minimal-cost assignment of every row to a distinct column, `rows <= cols`.
/// Shortest-augmenting-path method with dual potentials; costs must be finite.
fn min_assignment_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    if n == 0 {
        return 0.0;
    }
    let m = cost[0].len();
    assert!(n <= m, "assignment expects rows <= cols");
    // 1-based with a virtual column 0 holding the row being inserted.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut row_of = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut total = 0.0;
    for j in 1..=m {
        if row_of[j] != 0 {
            total += cost[row_of[j] - 1][j - 1];
        }
    }
    total
}

/// OSPA distance between two position sets: `(total, localization,
/// cardinality)` with `total^p = loc^p + card^p`. Distances are clipped at the
/// cutoff, unmatched points pay the cutoff, and the p-norm averages over the
/// larger cardinality. Two empty sets score zero.
pub fn ospa(truth: &[Vector2<f64>], est: &[Vector2<f64>], cfg: &OspaConfig) -> (f64, f64, f64) {
    debug_assert!(cfg.cutoff_m > 0.0 && cfg.order >= 1.0);
    let (small, large) = if truth.len() <= est.len() { (truth, est) } else { (est, truth) };
    let (nu, nv) = (small.len(), large.len());
    if nv == 0 {
        return (0.0, 0.0, 0.0);
    }
    let c = cfg.cutoff_m;
    let p = cfg.order;
    let matched = if nu == 0 {
        0.0
    } else {
        let cost: Vec<Vec<f64>> = small
            .iter()
            .map(|a| large.iter().map(|b| (a - b).norm().min(c).powf(p)).collect())
            .collect();
        min_assignment_cost(&cost)
    };
    let card_pow = c.powf(p) * (nv - nu) as f64;
    let total = ((matched + card_pow) / nv as f64).powf(1.0 / p);
    let loc = (matched / nv as f64).powf(1.0 / p);
    let card = (card_pow / nv as f64).powf(1.0 / p);
    (total, loc, card)
}

/// One confirmed track's belief at one step, as archived in run records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackSnapshot {
    pub id: u32,
    pub xi: f64,
    pub mean: ObjectState,
    pub cov: Matrix4<f64>,
}

/// Everything recorded at one time step of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub time_index: usize,
    pub ospa: f64,
    pub loc: f64,
    pub card: f64,
    pub estimated_n: usize,
    pub truth_n: usize,
    /// Wall-clock seconds spent inside the tracker for this step.
    pub step_seconds: f64,
    pub bytes_sent: usize,
    pub tracks: Vec<TrackSnapshot>,
}

/// One complete seeded run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub steps: Vec<StepRecord>,
}

/// Drive the tracker over one scene: synthesize every radar's snapshot per
/// step from the ground truth, absorb it, and score the confirmed estimates
/// against the truth positions. All randomness (RCS draws, reflection phases,
/// receiver noise) comes from the seeded generator, so a run is a pure
/// function of (config, scene, pool, seed).
pub fn run_scene(
    cfg: &ModelConfig,
    scene: &Scene,
    pool: NodePool,
    seed: u64,
    ospa_cfg: &OspaConfig,
) -> Result<RunRecord, EngineError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut store = TrackStore::new(cfg.clone(), scene.radars.clone(), pool);
    let lambda_z_true = 1.0 / scene.noise_variance;
    let mut steps = Vec::with_capacity(scene.n_steps());
    for n in 0..scene.n_steps() {
        let mut snaps = Vec::with_capacity(scene.radars.len());
        for radar in &scene.radars {
            let mut objs: Vec<(ObjectState, Complex64, bool)> = Vec::new();
            for traj in &scene.trajectories {
                if let Some(s) = traj.state_at(n) {
                    let range = (Vector2::new(s.x, s.y) - radar.position).norm();
                    let rcs = sample_rcs(scene.rcs_model, scene.mean_rcs_m2, &mut rng);
                    let mag = reflection_magnitude(cfg, range, rcs);
                    let phase: f64 = rng.gen_range(0.0..TAU);
                    objs.push((*s, Complex64::from_polar(mag, phase), true));
                }
            }
            snaps.push(synthesize_snapshot(&objs, radar, lambda_z_true, n, &mut rng));
        }
        let t0 = Instant::now();
        let summary = vmp_step(&mut store, &snaps, n)?;
        let step_seconds = t0.elapsed().as_secs_f64();
        let est = estimates(&store, cfg.delta_est);
        let est_pos: Vec<Vector2<f64>> = est.iter().map(|(_, s)| s.xy()).collect();
        let truth = scene.truth_positions(n);
        let (total, loc, card) = ospa(&truth, &est_pos, ospa_cfg);
        let tracks = store
            .objects
            .iter()
            .filter(|o| o.xi > cfg.delta_est)
            .map(|o| TrackSnapshot {
                id: o.id,
                xi: o.xi,
                mean: o.current_belief().mean,
                cov: o.current_belief().cov,
            })
            .collect();
        steps.push(StepRecord {
            time_index: n,
            ospa: total,
            loc,
            card,
            estimated_n: est.len(),
            truth_n: truth.len(),
            step_seconds,
            bytes_sent: summary.bytes_sent,
            tracks,
        });
    }
    Ok(RunRecord { seed, steps })
}

/// Mean curve values at one time index, across successful runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePoint {
    pub time_index: usize,
    pub mean_ospa: f64,
    pub std_ospa: f64,
    pub mean_loc: f64,
    pub mean_card: f64,
}

/// Wall-clock statistics over every tracker step of every successful run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub steps: usize,
    pub mean_s: f64,
    pub std_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub total_s: f64,
}

/// Aggregated result of a Monte-Carlo batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub records: Vec<RunRecord>,
    /// Seeds of runs that failed, with the failure message. Failed runs are
    /// excluded from every aggregate.
    pub failures: Vec<(u64, String)>,
    pub curve: Vec<CurvePoint>,
    pub runtime: RuntimeStats,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `i` in a batch with base seed `base`: decorrelated, and stable
/// regardless of how the batch is scheduled.
pub fn run_seed(base: u64, run: usize) -> u64 {
    splitmix64(base ^ (run as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    (mean, var.sqrt())
}

/// Run `runs` seeded scenes in parallel and aggregate their curves. The
/// factory maps a run seed to that run's scene and node pool (random scenes
/// draw their geometry from the seed; deterministic scenes ignore it). A
/// panicking or erroring run is recorded in `failures` with a stderr warning
/// and excluded from the aggregates.
pub fn monte_carlo<F>(
    cfg: &ModelConfig,
    factory: F,
    runs: usize,
    base_seed: u64,
    ospa_cfg: &OspaConfig,
) -> MonteCarloResult
where
    F: Fn(u64) -> (Scene, NodePool) + Sync,
{
    assert!(runs >= 1, "need at least one run");
    let outcomes: Vec<(u64, Result<RunRecord, String>)> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let seed = run_seed(base_seed, i);
            let result = catch_unwind(AssertUnwindSafe(|| {
                let (scene, pool) = factory(seed);
                run_scene(cfg, &scene, pool, seed, ospa_cfg)
            }));
            let flat = match result {
                Ok(Ok(rec)) => Ok(rec),
                Ok(Err(e)) => Err(e.to_string()),
                Err(panic) => Err(panic_message(&panic)),
            };
            (seed, flat)
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(rec) => records.push(rec),
            Err(msg) => {
                eprintln!("warning: run with seed {seed} failed and is excluded: {msg}");
                failures.push((seed, msg));
            }
        }
    }

    let n_steps = records.iter().map(|r| r.steps.len()).max().unwrap_or(0);
    let mut curve = Vec::with_capacity(n_steps);
    for n in 0..n_steps {
        let at: Vec<&StepRecord> =
            records.iter().filter_map(|r| r.steps.get(n)).collect();
        let ospas: Vec<f64> = at.iter().map(|s| s.ospa).collect();
        let (mean_ospa, std_ospa) = mean_std(&ospas);
        let mean_loc = at.iter().map(|s| s.loc).sum::<f64>() / at.len().max(1) as f64;
        let mean_card = at.iter().map(|s| s.card).sum::<f64>() / at.len().max(1) as f64;
        curve.push(CurvePoint { time_index: n, mean_ospa, std_ospa, mean_loc, mean_card });
    }

    let times: Vec<f64> =
        records.iter().flat_map(|r| r.steps.iter().map(|s| s.step_seconds)).collect();
    let (mean_s, std_s) = mean_std(&times);
    let runtime = RuntimeStats {
        steps: times.len(),
        mean_s,
        std_s,
        min_s: times.iter().copied().fold(f64::INFINITY, f64::min).min(f64::INFINITY),
        max_s: times.iter().copied().fold(0.0, f64::max),
        total_s: times.iter().sum(),
    };

    MonteCarloResult { records, failures, curve, runtime }
}

fn panic_message(panic: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = panic.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_string()
    }
}

/// Write the aggregate curve as CSV.
pub fn write_ospa_csv<W: IoWrite>(result: &MonteCarloResult, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "timeindex, meanVMP, stdVMP, meanLoc, meanCard")?;
    for p in &result.curve {
        writeln!(
            out,
            "{}, {}, {}, {}, {}",
            p.time_index, p.mean_ospa, p.std_ospa, p.mean_loc, p.mean_card
        )?;
    }
    Ok(())
}

//! Acceptance checklist for the tracker: numerical oracles for the core
//! update rules plus the benchmark scenes at reduced Monte-Carlo depth.
//! Every test prints one `[ k/12] name: PASS/FAIL` line; run with
//! `cargo test --test acceptance -- --nocapture --test-threads=1` to read
//! the checklist in order.

use std::f64::consts::TAU;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use vartrack::beliefs::{fuse_state_marginal, GammaBelief, GaussianBelief, GaussianMessage, MessageSource};
use vartrack::bus::NodePool;
use vartrack::config::ModelConfig;
use vartrack::engine::{
    compute_data_message, update_alpha, update_gamma, update_lambda_z, update_process_noise,
    AlphaContext, LambdaZState,
};
use vartrack::eval::{monte_carlo, ospa, run_scene, MonteCarloResult, OspaConfig};
use vartrack::scenario::{
    cv_step, g_matrix, make_crossing_scene, make_handover_scene, make_noise_scene,
    make_parallel_scene, t_matrix, RcsModel, Scene,
};
use vartrack::signal::{reflection_magnitude, steering_correlation, steering_vector, RadarNode};
use vartrack::ObjectState;

fn verdict(idx: usize, name: &str, pass: bool, detail: &str) {
    println!("[{idx:>2}/12] {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "acceptance check {idx} ({name}) failed: {detail}");
}

fn random_spd2<R: Rng>(rng: &mut R, scale: f64) -> Matrix2<f64> {
    let a = Matrix2::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    a * a.transpose() * scale + Matrix2::identity() * (0.3 * scale)
}

fn rel2(got: &Matrix2<f64>, want: &Matrix2<f64>) -> f64 {
    (got - want).norm() / want.norm()
}

/// Moments of the normalized product of two planar Gaussian densities,
/// integrated on a regular grid wide enough that the truncated tails are
/// below machine precision.
fn grid_product_moments(
    mean_a: Vector2<f64>,
    prec_a: Matrix2<f64>,
    mean_b: Vector2<f64>,
    prec_b: Matrix2<f64>,
) -> (Vector2<f64>, Matrix2<f64>) {
    let cov_a = prec_a.try_inverse().expect("factor a invertible");
    let cov_b = prec_b.try_inverse().expect("factor b invertible");
    let mut lo = [0.0f64; 2];
    let mut n = [0usize; 2];
    let mut step = [0.0f64; 2];
    for ax in 0..2 {
        let smax = cov_a[(ax, ax)].sqrt().max(cov_b[(ax, ax)].sqrt());
        lo[ax] = mean_a[ax].min(mean_b[ax]) - 8.0 * smax;
        let hi = mean_a[ax].max(mean_b[ax]) + 8.0 * smax;
        let sprod = (prec_a[(ax, ax)] + prec_b[(ax, ax)]).sqrt().recip();
        step[ax] = sprod / 4.0;
        n[ax] = ((hi - lo[ax]) / step[ax]).ceil() as usize + 1;
    }
    let log_density = |p: &Vector2<f64>| {
        let da = p - mean_a;
        let db = p - mean_b;
        -0.5 * (da.dot(&(prec_a * da)) + db.dot(&(prec_b * db)))
    };
    let mut logs = vec![0.0f64; n[0] * n[1]];
    let mut lmax = f64::NEG_INFINITY;
    for i in 0..n[0] {
        for j in 0..n[1] {
            let p = Vector2::new(lo[0] + step[0] * i as f64, lo[1] + step[1] * j as f64);
            let l = log_density(&p);
            logs[i * n[1] + j] = l;
            lmax = lmax.max(l);
        }
    }
    let mut mass = 0.0;
    let mut first = Vector2::zeros();
    for i in 0..n[0] {
        for j in 0..n[1] {
            let w = (logs[i * n[1] + j] - lmax).exp();
            let p = Vector2::new(lo[0] + step[0] * i as f64, lo[1] + step[1] * j as f64);
            mass += w;
            first += w * p;
        }
    }
    let mean = first / mass;
    let mut second = Matrix2::zeros();
    for i in 0..n[0] {
        for j in 0..n[1] {
            let w = (logs[i * n[1] + j] - lmax).exp();
            let d = Vector2::new(lo[0] + step[0] * i as f64, lo[1] + step[1] * j as f64) - mean;
            second += w * d * d.transpose();
        }
    }
    (mean, second / mass)
}

#[test]
fn c01_gaussian_fusion_matches_grid_product() {
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    let mut worst_mean = 0.0f64;
    let mut worst_cov = 0.0f64;
    for _ in 0..50 {
        let mean_a = Vector4::new(
            rng.gen_range(20.0..80.0),
            rng.gen_range(20.0..80.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
        );
        let pos_scale = rng.gen_range(0.5..4.0);
        let vel_scale = rng.gen_range(0.2..2.0);
        let pos_cov_a = random_spd2(&mut rng, pos_scale);
        let vel_cov_a = random_spd2(&mut rng, vel_scale);
        let mut cov_a = Matrix4::zeros();
        cov_a.view_mut((0, 0), (2, 2)).copy_from(&pos_cov_a);
        cov_a.view_mut((2, 2), (2, 2)).copy_from(&vel_cov_a);
        let msg_a = GaussianMessage::from_moments(mean_a, cov_a, MessageSource::Prior).unwrap();

        let mut mean_b = mean_a;
        mean_b.x += rng.gen_range(-2.0..2.0);
        mean_b.y += rng.gen_range(-2.0..2.0);
        let prec_scale = rng.gen_range(0.2..2.0);
        let prec_b_pos = random_spd2(&mut rng, prec_scale);
        let mut prec_b = Matrix4::zeros();
        prec_b.view_mut((0, 0), (2, 2)).copy_from(&prec_b_pos);
        let msg_b = GaussianMessage::from_information(mean_b, prec_b, MessageSource::Data(0));

        let fused = fuse_state_marginal(&[msg_a.clone(), msg_b]).unwrap();

        // Both factors are block-diagonal, so the exact position marginal is
        // the product of the two position factors; integrate that product on
        // a grid and compare moments.
        let prec_a_pos = msg_a.precision.fixed_view::<2, 2>(0, 0).into_owned();
        let (gm, gc) = grid_product_moments(mean_a.xy(), prec_a_pos, mean_b.xy(), prec_b_pos);
        let fused_pos_mean = fused.mean.xy();
        worst_mean = worst_mean.max((gm - fused_pos_mean).norm() / fused_pos_mean.norm());
        worst_cov = worst_cov.max(rel2(&gc, &fused.position_cov()));

        // The second factor carries no velocity information, so the fused
        // velocity marginal must reproduce the first factor's exactly.
        let fused_vel_cov = fused.cov.fixed_view::<2, 2>(2, 2).into_owned();
        worst_cov = worst_cov.max(rel2(&fused_vel_cov, &vel_cov_a));
        let vel_got = fused.mean.fixed_rows::<2>(2).into_owned();
        let vel_want = mean_a.fixed_rows::<2>(2).into_owned();
        worst_mean = worst_mean.max((vel_got - vel_want).norm() / vel_want.norm().max(1.0));
    }
    let pass = worst_mean <= 1e-6 && worst_cov <= 1e-6;
    verdict(
        1,
        "gaussian fusion vs grid product",
        pass,
        &format!("worst rel mean {worst_mean:.2e}, worst rel cov {worst_cov:.2e}, tol 1e-6"),
    );
}

#[test]
fn c02_steering_gradients_match_finite_differences() {
    let cfg = ModelConfig::default();
    let radar = RadarNode::from_config(&cfg, 0, Vector2::zeros(), 0.0);
    let mut rng = ChaCha12Rng::seed_from_u64(102);
    let h = 3e-4;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let r = rng.gen_range(25.0..150.0);
        let th = rng.gen_range(-0.7..0.7f64);
        let state = ObjectState::new(
            r * th.sin(),
            r * th.cos(),
            rng.gen_range(-10.0..10.0),
            rng.gen_range(-10.0..10.0),
        );
        let sv = steering_vector(&radar, &state).unwrap();
        for axis in 0..2 {
            let mut sp = state;
            let mut sm = state;
            sp[axis] += h;
            sm[axis] -= h;
            let svp = steering_vector(&radar, &sp).unwrap();
            let svm = steering_vector(&radar, &sm).unwrap();
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..sv.s.len() {
                let fd = (svp.s[i] - svm.s[i]) / (2.0 * h);
                num += (sv.gradient[axis][i] - fd).norm_sqr();
                den += fd.norm_sqr();
            }
            worst = worst.max((num / den).sqrt());
        }
    }
    verdict(
        2,
        "steering gradients vs finite differences",
        worst <= 1e-5,
        &format!("worst rel {worst:.2e}, tol 1e-5"),
    );
}

#[test]
fn c03_fisher_precision_matches_numerical_hessian() {
    let cfg = ModelConfig::default();
    let lambda_z = 1.0 / cfg.noise_variance;
    let radar = RadarNode::from_config(&cfg, 0, Vector2::zeros(), 0.0);
    let mut rng = ChaCha12Rng::seed_from_u64(103);
    let mut worst = 0.0f64;
    for _ in 0..8 {
        let r = rng.gen_range(40.0..120.0);
        let th = rng.gen_range(-0.5..0.5f64);
        let truth = ObjectState::new(r * th.sin(), r * th.cos(), 4.0, 0.0);
        // Strong reflector: the message precision carries the amplitude
        // second moment, so the comparison against the Hessian of the
        // plug-in objective is only clean when the amplitude posterior
        // variance is negligible next to |alpha|^2.
        let mag = reflection_magnitude(&cfg, r, 100.0 * cfg.mean_rcs_m2);
        let alpha_true = Complex64::from_polar(mag, rng.gen_range(0.0..TAU));
        let sv = steering_vector(&radar, &truth).unwrap();
        let z: Vec<Complex64> = sv.s.iter().map(|s| alpha_true * s).collect();

        let rows = [(truth, Matrix2::zeros(), cfg.gamma_init)];
        let mut ctx = AlphaContext::build(radar.clone(), z.clone(), lambda_z, &rows);
        let xi = [1.0];
        update_alpha(&mut ctx, &xi).unwrap();
        let alpha_bar = ctx.alpha.mean[0];

        let pred_cov = Matrix4::from_diagonal(&Vector4::new(0.09, 0.09, 1.0, 1.0));
        let prediction =
            GaussianMessage::from_moments(truth, pred_cov, MessageSource::Forward).unwrap();
        let msg = compute_data_message(&cfg, &ctx, 0, &xi, &prediction).unwrap();
        let p0 = msg.mean.xy();
        let fisher = msg.precision.fixed_view::<2, 2>(0, 0).into_owned();

        // The message precision claims to be the negative Hessian of the
        // signal-match objective at the refined position; difference it.
        let f = |p: &Vector2<f64>| {
            let corr = steering_correlation(&radar, p, &z).unwrap();
            2.0 * lambda_z * (alpha_bar.conj() * corr).re
        };
        let fd = 0.02;
        let ex = Vector2::new(fd, 0.0);
        let ey = Vector2::new(0.0, fd);
        let f0 = f(&p0);
        let hxx = (f(&(p0 + ex)) - 2.0 * f0 + f(&(p0 - ex))) / (fd * fd);
        let hyy = (f(&(p0 + ey)) - 2.0 * f0 + f(&(p0 - ey))) / (fd * fd);
        let hxy = (f(&(p0 + ex + ey)) - f(&(p0 + ex - ey)) - f(&(p0 - ex + ey))
            + f(&(p0 - ex - ey)))
            / (4.0 * fd * fd);
        let neg_hess = -Matrix2::new(hxx, hxy, hxy, hyy);
        worst = worst.max(rel2(&fisher, &neg_hess));
    }
    verdict(
        3,
        "fisher precision vs numerical hessian",
        worst <= 0.01,
        &format!("worst rel {worst:.2e}, tol 1e-2"),
    );
}

/// Posterior mean of a positive scalar with the given unnormalized
/// log-density, by trapezoidal integration on a log-spaced grid around
/// `scale`.
fn grid_posterior_mean(log_density: impl Fn(f64) -> f64, scale: f64) -> f64 {
    let n = 400_000usize;
    let lo = scale * 1e-6;
    let hi = scale * 1e6;
    let ratio = (hi / lo).powf(1.0 / (n - 1) as f64);
    let mut xs = Vec::with_capacity(n);
    let mut ls = Vec::with_capacity(n);
    let mut lmax = f64::NEG_INFINITY;
    let mut x = lo;
    for _ in 0..n {
        let l = log_density(x);
        xs.push(x);
        ls.push(l);
        lmax = lmax.max(l);
        x *= ratio;
    }
    let mut mass = 0.0;
    let mut first = 0.0;
    for i in 0..n - 1 {
        let w0 = (ls[i] - lmax).exp();
        let w1 = (ls[i + 1] - lmax).exp();
        let dx = xs[i + 1] - xs[i];
        mass += 0.5 * (w0 + w1) * dx;
        first += 0.5 * (w0 * xs[i] + w1 * xs[i + 1]) * dx;
    }
    first / mass
}

#[test]
fn c04_gamma_posterior_means_match_grid_oracles() {
    let cfg = ModelConfig::default();
    let radar = RadarNode::from_config(&cfg, 0, Vector2::zeros(), 0.0);
    let lambda_true = 1.0 / cfg.noise_variance;
    let mut rng = ChaCha12Rng::seed_from_u64(104);
    let mut worst = 0.0f64;

    // Reflectivity precision: plant one object, fit its amplitude, then
    // compare the conjugate update against direct integration of
    // prior(gamma) * exp(E[log complex-normal likelihood]).
    let truth = ObjectState::new(12.0, 70.0, 4.0, 0.0);
    let mag = reflection_magnitude(&cfg, 71.0, cfg.mean_rcs_m2);
    let alpha_true = Complex64::from_polar(mag, 1.1);
    let sv = steering_vector(&radar, &truth).unwrap();
    let mut z: Vec<Complex64> = sv.s.iter().map(|s| alpha_true * s).collect();
    let sigma = (0.5 / lambda_true).sqrt();
    for zi in z.iter_mut() {
        *zi += Complex64::new(sigma * rng.gen_range(-1.0..1.0), sigma * rng.gen_range(-1.0..1.0));
    }
    for eta in [cfg.eta, 5.0] {
        let rows = [(truth, Matrix2::zeros(), cfg.gamma_init)];
        let mut ctx = AlphaContext::build(radar.clone(), z.clone(), lambda_true, &rows);
        update_alpha(&mut ctx, &[1.0]).unwrap();
        let m2 = ctx.alpha.second_moment(0);
        let prev = cfg.gamma_init;
        let belief = update_gamma(&mut ctx, 0, eta, prev);
        let oracle = grid_posterior_mean(
            |g| (eta * prev) * g.ln() - eta * g - g * m2,
            belief.mean(),
        );
        worst = worst.max((belief.mean() - oracle).abs() / oracle);
    }

    // Noise precision: two object-free snapshots; the oracle counts one
    // degree of freedom per complex sample actually summed over.
    let mut state = LambdaZState::new(&cfg);
    let mut count = 0usize;
    let mut energy = 0.0f64;
    let nobody: [(ObjectState, Complex64, bool); 0] = [];
    for step in 0..2 {
        let snap = vartrack::signal::synthesize_snapshot(&nobody, &radar, lambda_true, step, &mut rng);
        for zi in &snap.z {
            count += 1;
            energy += zi.norm_sqr();
        }
        let ctx = AlphaContext::build(radar.clone(), snap.z, state.belief.mean(), &[]);
        update_lambda_z(&mut state, &ctx, &[], &cfg);
    }
    let (az, bz) = (cfg.alpha_z, cfg.beta_z);
    let oracle = grid_posterior_mean(
        |l| (count as f64 + az - 1.0) * l.ln() - l * (energy + bz),
        state.belief.mean(),
    );
    worst = worst.max((state.belief.mean() - oracle).abs() / oracle);

    // Acceleration precisions: a hand-built belief chain, with the
    // per-transition residual statistic recomputed here from scratch.
    let dt = 0.1;
    let t = t_matrix(dt);
    let g = g_matrix(dt);
    let mut beliefs: Vec<GaussianBelief> = Vec::new();
    let mut mean = ObjectState::new(30.0, 40.0, 4.0, -1.0);
    for _ in 0..7 {
        let a = Matrix4::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let cov = a * a.transpose() * 0.01 + Matrix4::identity() * 0.005;
        beliefs.push(GaussianBelief { mean, cov });
        let acc = Vector4::from_fn(|_, _| rng.gen_range(-0.7..0.7));
        mean = cv_step(&mean, dt, &acc);
    }
    let mut lambda_a: [GammaBelief; 4] = std::array::from_fn(|_| GammaBelief::new(1.0, 1.0));
    update_process_noise(&beliefs, &cfg, dt, &mut lambda_a);
    for j in 0..4 {
        let mut v: Vec<f64> = Vec::new();
        for w in beliefs.windows(2) {
            let r = w[1].mean - t * w[0].mean;
            let m = r * r.transpose() + w[1].cov + t * w[0].cov * t.transpose();
            v.push(m[(j, j)] / (g[(j, j)] * g[(j, j)]));
        }
        let (zeta, chi) = (cfg.zeta, cfg.chi);
        let oracle = grid_posterior_mean(
            |l| {
                let lik: f64 = v.iter().map(|vj| 0.5 * l.ln() - 0.5 * l * vj).sum();
                lik + (0.5 * zeta - 1.0) * l.ln() - 0.5 * chi * l
            },
            lambda_a[j].mean(),
        );
        worst = worst.max((lambda_a[j].mean() - oracle).abs() / oracle);
    }

    verdict(
        4,
        "gamma posterior means vs grid oracles",
        worst <= 1e-3,
        &format!("worst rel {worst:.2e}, tol 1e-3"),
    );
}

#[test]
fn c05_amplitude_update_matches_scalar_ridge() {
    let cfg = ModelConfig::default();
    let lambda_z = 1.0 / cfg.noise_variance;
    let radar = RadarNode::from_config(&cfg, 0, Vector2::zeros(), 0.0);
    let mut rng = ChaCha12Rng::seed_from_u64(105);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let r = rng.gen_range(30.0..130.0);
        let th = rng.gen_range(-0.6..0.6f64);
        let truth = ObjectState::new(r * th.sin(), r * th.cos(), 3.0, 1.0);
        let mag = reflection_magnitude(&cfg, r, cfg.mean_rcs_m2);
        let alpha_true = Complex64::from_polar(mag, rng.gen_range(0.0..TAU));
        let objs = [(truth, alpha_true, true)];
        let snap = vartrack::signal::synthesize_snapshot(&objs, &radar, lambda_z, 0, &mut rng);

        // Track mean sits a little off the truth, with a nonzero position
        // covariance so the Gram diagonal carries the curvature correction.
        let mut mean = truth;
        mean.x += rng.gen_range(-0.3..0.3);
        mean.y += rng.gen_range(-0.3..0.3);
        let pos_cov = random_spd2(&mut rng, 0.05);
        let gamma = 7.0;
        let xi = [rng.gen_range(0.3..1.0)];
        let rows = [(mean, pos_cov, gamma)];
        let mut ctx = AlphaContext::build(radar.clone(), snap.z.clone(), lambda_z, &rows);
        update_alpha(&mut ctx, &xi).unwrap();

        let sv = steering_vector(&radar, &mean).unwrap();
        let mut s_h_z = Complex64::new(0.0, 0.0);
        for (s, zi) in sv.s.iter().zip(&snap.z) {
            s_h_z += s.conj() * zi;
        }
        let mut jj = Matrix2::zeros();
        for a in 0..2 {
            for b in 0..2 {
                jj[(a, b)] = sv.gradient[a]
                    .iter()
                    .zip(&sv.gradient[b])
                    .map(|(ga, gb)| (ga.conj() * gb).re)
                    .sum();
            }
        }
        let delta = (pos_cov * jj).trace();
        let p = gamma + lambda_z * xi[0] * (radar.n_z() as f64 + delta);
        let ridge_mean = s_h_z * (lambda_z * xi[0] / p);
        let ridge_var = 1.0 / p;
        worst = worst.max((ctx.alpha.mean[0] - ridge_mean).norm() / ridge_mean.norm());
        worst = worst.max((ctx.alpha.cov[(0, 0)].re - ridge_var).abs() / ridge_var);
    }
    verdict(
        5,
        "amplitude update vs scalar ridge",
        worst <= 1e-10,
        &format!("worst rel {worst:.2e}, tol 1e-10"),
    );
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        let n = used.len();
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for i in 0..n {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

fn brute_ospa(truth: &[Vector2<f64>], est: &[Vector2<f64>], cfg: &OspaConfig) -> (f64, f64, f64) {
    let (small, large) = if truth.len() <= est.len() { (truth, est) } else { (est, truth) };
    let (nu, nv) = (small.len(), large.len());
    if nv == 0 {
        return (0.0, 0.0, 0.0);
    }
    let (c, p) = (cfg.cutoff_m, cfg.order);
    let mut matched = 0.0;
    if nu > 0 {
        matched = f64::INFINITY;
        for perm in permutations(nv) {
            let s: f64 = (0..nu)
                .map(|i| (small[i] - large[perm[i]]).norm().min(c).powf(p))
                .sum();
            matched = matched.min(s);
        }
    }
    let card = c.powf(p) * (nv - nu) as f64;
    (
        ((matched + card) / nv as f64).powf(1.0 / p),
        (matched / nv as f64).powf(1.0 / p),
        (card / nv as f64).powf(1.0 / p),
    )
}

#[test]
fn c06_ospa_matches_brute_force() {
    let mut rng = ChaCha12Rng::seed_from_u64(106);
    let mut worst = 0.0f64;
    for case in 0..250 {
        let cfg = if case % 3 == 0 {
            OspaConfig { cutoff_m: 5.0, order: 1.0 }
        } else {
            OspaConfig::default()
        };
        let nt = rng.gen_range(0..=6);
        let ne = rng.gen_range(0..=6);
        // Cluster the points so assignments actually compete and several
        // pair distances straddle the cutoff.
        let spread = rng.gen_range(1.0..12.0);
        let draw = |rng: &mut ChaCha12Rng| {
            Vector2::new(rng.gen_range(0.0..spread), rng.gen_range(0.0..spread))
        };
        let truth: Vec<Vector2<f64>> = (0..nt).map(|_| draw(&mut rng)).collect();
        let est: Vec<Vector2<f64>> = (0..ne).map(|_| draw(&mut rng)).collect();
        let got = ospa(&truth, &est, &cfg);
        let want = brute_ospa(&truth, &est, &cfg);
        worst = worst
            .max((got.0 - want.0).abs())
            .max((got.1 - want.1).abs())
            .max((got.2 - want.2).abs());
    }
    let cfg = OspaConfig::default();
    let lone = [Vector2::new(3.0, 4.0)];
    let miss = ospa(&lone, &[], &cfg);
    let ghost = ospa(&[], &lone, &cfg);
    let both_empty = ospa(&[], &[], &cfg);
    let pass = worst <= 1e-9
        && miss.0 == 5.0
        && ghost.0 == 5.0
        && both_empty == (0.0, 0.0, 0.0);
    verdict(
        6,
        "ospa vs brute force",
        pass,
        &format!("worst abs {worst:.2e}, cardinality-miss distance {}", miss.0),
    );
}

#[test]
fn c07_range_constants_are_exact() {
    let radar = RadarNode::from_config(&ModelConfig::default(), 0, Vector2::zeros(), 0.0);
    let res = radar.range_resolution();
    let rmax = radar.unambiguous_range();
    // Both are dyadic rationals at the defaults, so equality is exact.
    let pass = res == 1.5625 && rmax == 200.0;
    verdict(
        7,
        "derived range constants",
        pass,
        &format!("resolution {res} m, unambiguous range {rmax} m"),
    );
}

fn pool_for(scene: &Scene) -> NodePool {
    NodePool::new(scene.radars.iter().map(|r| r.id).collect())
}

fn mean_over<F: Fn(usize) -> bool>(
    result: &MonteCarloResult,
    keep: F,
    value: fn(&vartrack::eval::StepRecord) -> f64,
) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for rec in &result.records {
        for step in &rec.steps {
            if keep(step.time_index) {
                sum += value(step);
                n += 1;
            }
        }
    }
    sum / n as f64
}

#[test]
fn c08_crossing_steady_state_accuracy() {
    let cfg = ModelConfig::default();
    let ospa_cfg = OspaConfig::default();
    let result = monte_carlo(
        &cfg,
        |seed| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x43524f53_53494e47);
            let scene = make_crossing_scene(&cfg, &mut rng);
            let pool = pool_for(&scene);
            (scene, pool)
        },
        20,
        0xC8,
        &ospa_cfg,
    );
    let steady = |n: usize| (50..=150).contains(&n);
    let mean_ospa = mean_over(&result, steady, |s| s.ospa);
    let mean_loc = mean_over(&result, steady, |s| s.loc);
    let per_step = result.runtime.mean_s;
    let pass = result.failures.is_empty() && mean_ospa <= 1.0 && mean_loc <= 0.3 && per_step <= 5.0;
    verdict(
        8,
        "crossing steady-state accuracy",
        pass,
        &format!(
            "{} runs, steady ospa {mean_ospa:.3} m (<=1.0), loc {mean_loc:.3} m (<=0.3), {per_step:.3} s/step (<=5)",
            result.records.len()
        ),
    );
}

#[test]
fn c09_parallel_tracks_stay_resolved() {
    let cfg = ModelConfig::default();
    let ospa_cfg = OspaConfig::default();
    let reference = make_parallel_scene(&cfg);
    assert_eq!(reference.rcs_model, RcsModel::Swerling3);
    let close: Vec<usize> = (0..reference.n_steps())
        .filter(|&n| {
            let t = reference.truth_positions(n);
            t.len() == 2 && ((t[0] - t[1]).norm() - 1.5).abs() < 0.01
        })
        .collect();
    assert!(!close.is_empty(), "scene never reaches the minimum separation");
    let result = monte_carlo(
        &cfg,
        |_| {
            let scene = make_parallel_scene(&cfg);
            let pool = pool_for(&scene);
            (scene, pool)
        },
        20,
        0xC9,
        &ospa_cfg,
    );
    let close_ospa = mean_over(&result, |n| close.contains(&n), |s| s.ospa);
    let mean_k = mean_over(&result, |n| (40..=160).contains(&n), |s| s.estimated_n as f64);
    let pass = result.failures.is_empty() && close_ospa <= 1.5 && mean_k >= 1.7;
    verdict(
        9,
        "parallel tracks stay resolved",
        pass,
        &format!(
            "{} runs, ospa at 1.5 m separation {close_ospa:.3} m (<=1.5), mean cardinality {mean_k:.3} (>=1.7)",
            result.records.len()
        ),
    );
}

#[test]
fn c10_handover_keeps_one_track() {
    let cfg = ModelConfig::default();
    let ospa_cfg = OspaConfig::default();
    let result = monte_carlo(
        &cfg,
        |_| {
            let scene = make_handover_scene(&cfg);
            let pool = pool_for(&scene);
            (scene, pool)
        },
        10,
        0xC10,
        &ospa_cfg,
    );
    let mut fractions = Vec::new();
    for rec in &result.records {
        let ones = rec.steps.iter().filter(|s| s.estimated_n == 1).count();
        fractions.push(ones as f64 / rec.steps.len() as f64);
    }
    let mean_frac = fractions.iter().sum::<f64>() / fractions.len() as f64;
    let min_frac = fractions.iter().cloned().fold(f64::INFINITY, f64::min);
    let pass = result.failures.is_empty() && mean_frac >= 0.90;
    verdict(
        10,
        "handover continuity",
        pass,
        &format!(
            "{} runs, single-track fraction mean {mean_frac:.3} min {min_frac:.3} (>=0.90)",
            result.records.len()
        ),
    );
}

#[test]
fn c11_noise_only_stays_quiet() {
    let cfg = ModelConfig::default();
    let ospa_cfg = OspaConfig::default();
    let result = monte_carlo(
        &cfg,
        |_| {
            let scene = make_noise_scene(&cfg, 9.9);
            let pool = pool_for(&scene);
            (scene, pool)
        },
        20,
        0xC11,
        &ospa_cfg,
    );
    let mut steps = 0usize;
    let mut spurious = 0usize;
    for rec in &result.records {
        for s in &rec.steps {
            assert_eq!(s.truth_n, 0);
            steps += 1;
            spurious += s.estimated_n;
        }
    }
    let rate = spurious as f64 / steps as f64;
    let pass = result.failures.is_empty() && rate <= 0.02;
    verdict(
        11,
        "noise-only false tracks",
        pass,
        &format!("{spurious} confirmed track-steps over {steps} steps, rate {rate:.4} (<=0.02)"),
    );
}

#[test]
fn c12_dropout_does_not_diverge() {
    let cfg = ModelConfig::default();
    let ospa_cfg = OspaConfig::default();
    let mut rng = ChaCha12Rng::seed_from_u64(112);
    let scene = make_crossing_scene(&cfg, &mut rng);
    let ids: Vec<u32> = scene.radars.iter().map(|r| r.id).collect();
    let dropped = ids[1];
    let pool = NodePool::new(ids).with_dropout(dropped, 100..usize::MAX);
    let rec = run_scene(&cfg, &scene, pool, 0xC12, &ospa_cfg).unwrap();
    let mut max_after = 0.0f64;
    let mut all_finite = true;
    for step in &rec.steps {
        all_finite &= step.ospa.is_finite();
        if step.time_index >= 100 {
            max_after = max_after.max(step.ospa);
        }
        for track in &step.tracks {
            all_finite &= track.mean.iter().all(|v| v.is_finite());
            all_finite &= track.cov.iter().all(|v| v.is_finite());
        }
    }
    let pass = all_finite && max_after <= ospa_cfg.cutoff_m + 1e-12;
    verdict(
        12,
        "radar dropout resilience",
        pass,
        &format!("max ospa after dropout {max_after:.3} m (cutoff {}), finite {all_finite}", ospa_cfg.cutoff_m),
    );
}

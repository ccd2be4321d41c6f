//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tensegrity_state::calibration::{calibrate, synthetic_dataset, CalibrationConfig, SyntheticCalibration};
use tensegrity_state::dynamics::{BatchState, Dynamics, DynamicsParams, StateVector};
use tensegrity_state::harness::{export_run, run_scenario, ScenarioConfig, ScenarioRun, Setting};
use tensegrity_state::ranging::{
    broadcast_round, packets_per_round, single_sided_tof, tof_estimate, twr_exchange, ClockModel, Module,
    ModuleRole, OffsetTable, RoundConfig, TwrDelays, TwrExchange, SPEED_OF_LIGHT,
};
use tensegrity_state::structure::{build_superball, NodeSet, SuperballParams};
use tensegrity_state::ukf::{predict, unscented_transform, update, Belief, FnProcess, UkfParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (s / n as f64).sqrt()
}

fn ds_twr() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_ds, mut worst_ratio, mut skewed) = (0.0f64, f64::INFINITY, 0);
    for _ in 0..1000 {
        let clock = |rng: &mut ChaCha8Rng| ClockModel {
            offset: rng.random_range(0.0..1.0),
            skew: rng.random_range(-50e-6..50e-6),
            quantum: 0.0,
        };
        let (ci, cj) = (clock(&mut rng), clock(&mut rng));
        let ex = TwrExchange {
            initiator: 0,
            responder: 1,
            start: rng.random_range(0.0..10.0),
            distance: rng.random_range(1.0..30.0),
            bias: 0.0,
            delays: TwrDelays::default(),
        };
        let ts = twr_exchange(&ex, &ci, &cj);
        let ds = (SPEED_OF_LIGHT * tof_estimate(&ts).unwrap() - ex.distance).abs();
        worst_ds = worst_ds.max(ds);
        if (ci.skew - cj.skew).abs() >= 20e-6 {
            let ss = (SPEED_OF_LIGHT * single_sided_tof(&ts).unwrap() - ex.distance).abs();
            worst_ratio = worst_ratio.min(ss / ds.max(1e-6));
            skewed += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst_ds < 0.02 && worst_ratio >= 10.0 && skewed > 0 && secs < 1.0,
        format!(
            "max double-sided error {worst_ds:.2e} m (< 0.02), min single/double ratio {worst_ratio:.1} over {skewed} exchanges at >= 20 ppm (>= 10), {secs:.3} s (< 1)"
        ),
    )
}

fn broadcast() -> Outcome {
    let exact = (2..=25).all(|n| packets_per_round(n) == 3 * n);
    let modules: Vec<Module> = (0..20)
        .map(|k| Module { id: k, clock: ClockModel::IDEAL, role: ModuleRole::Robot })
        .collect();
    let pts: Vec<Vector3<f64>> = (0..20).map(|k| Vector3::new(k as f64, 0.5 * k as f64, 1.0)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let round = broadcast_round(
        &modules,
        0.0,
        |_| pts.clone(),
        &OffsetTable::default(),
        &OffsetTable::default(),
        &RoundConfig::default(),
        &mut rng,
    )
    .unwrap();
    outcome(
        exact && round.packets == 60 && round.duration <= 0.060 + 1e-12,
        format!(
            "3n packets for n = 2..25: {exact}; n = 20: {} packets, round {:.1} ms (<= 60)",
            round.packets,
            round.duration * 1e3
        ),
    )
}

fn calibration() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (noise, limit) in [(0.03, (0.05, 0.03)), (0.0, (1e-3, 1e-3))] {
        let setup = SyntheticCalibration { samples: 400, noise_sigma: noise, ..SyntheticCalibration::default() };
        let (ds, truth) = synthetic_dataset(&setup, 42);
        let t0 = Instant::now();
        let res = calibrate(&ds, &setup.priors(), Some(&setup.hemisphere()), &CalibrationConfig::default()).unwrap();
        let secs = t0.elapsed().as_secs_f64();
        let anchor = rms(res.params.anchors.iter().zip(&truth.anchors).map(|(a, b)| (a - b).norm()));
        let offset = rms(res.offset_table().iter().map(|(i, j, o)| o - truth.offsets.get(i, j).unwrap()));
        pass &= anchor < limit.0 && offset < limit.1 && secs < 60.0;
        detail.push(format!(
            "sigma {noise}: anchor rms {anchor:.2e} m (< {}), offset rms {offset:.2e} m (< {}), {secs:.1} s (< 60)",
            limit.0, limit.1
        ));
    }
    outcome(pass, detail.join("; "))
}

fn free_superball() -> Dynamics {
    let params = SuperballParams { bar_damping: 0.0, cable_damping: 0.0, ..SuperballParams::default() };
    let model = build_superball(&params).unwrap();
    Dynamics::new(model, DynamicsParams { gravity: 0.0, ground: None, ..DynamicsParams::default() }).unwrap()
}

fn perturbed(dynamics: &Dynamics, rng: &mut ChaCha8Rng, drift: Vector3<f64>) -> StateVector {
    let nodes = dynamics.model().reference_nodes();
    let pos = nodes.positions.iter().map(|p| p + Vector3::from_fn(|_, _| rng.random_range(-0.02..0.02))).collect();
    let vel = (0..nodes.len()).map(|_| drift + Vector3::from_fn(|_, _| rng.random_range(-0.1..0.1))).collect();
    StateVector::from_nodes(&NodeSet::with_velocities(pos, vel))
}

/// Relaxed shape (settled with damping on) moving with rigid-bar velocities.
fn relaxed_motion(dynamics: &Dynamics, rng: &mut ChaCha8Rng, drift: Vector3<f64>) -> StateVector {
    let damped = Dynamics::new(
        build_superball(&SuperballParams::default()).unwrap(),
        DynamicsParams { gravity: 0.0, ground: None, ..DynamicsParams::default() },
    )
    .unwrap();
    let cmds = damped.nominal_commands();
    let mut state = StateVector::from_nodes(&damped.model().reference_nodes());
    for _ in 0..5_000 {
        state = damped.step(&state, &cmds, 1e-3).unwrap();
    }
    let pos = state.positions();
    let mut vel: Vec<Vector3<f64>> =
        (0..pos.len()).map(|_| drift + Vector3::from_fn(|_, _| rng.random_range(-0.1..0.1))).collect();
    for (_, i, j) in dynamics.model().bars() {
        let u = (pos[j] - pos[i]).normalize();
        let stretch = (vel[j] - vel[i]).dot(&u) / 2.0;
        vel[i] += stretch * u;
        vel[j] -= stretch * u;
    }
    StateVector::from_nodes(&NodeSet::with_velocities(pos, vel))
}

fn conservation() -> Outcome {
    let dynamics = free_superball();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut state = relaxed_motion(&dynamics, &mut rng, Vector3::new(0.2, -0.1, 0.05));
    let cmds = dynamics.nominal_commands();
    let rest = dynamics.rest_lengths(&cmds).unwrap();
    let (e0, p0) = (dynamics.energy(&state, &rest).total(), dynamics.momentum(&state));
    let elastic0 = dynamics.energy(&state, &rest).elastic;
    let (mut de, mut dp, mut swing) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10_000 {
        state = dynamics.step(&state, &cmds, 1e-3).unwrap();
        let e = dynamics.energy(&state, &rest);
        de = de.max((e.total() - e0).abs() / e0.abs());
        dp = dp.max((dynamics.momentum(&state) - p0).norm() / p0.norm());
        swing = swing.max((e.elastic - elastic0).abs());
    }
    outcome(
        de < 1e-3 && dp < 1e-9,
        format!(
            "max relative energy drift {de:.2e} (< 1e-3), momentum drift {dp:.2e} (< 1e-9) over 10 s at dt = 1e-3, \
             elastic exchange {swing:.3} J"
        ),
    )
}

fn batch_equivalence() -> Outcome {
    let model = build_superball(&SuperballParams::default()).unwrap();
    let dynamics = Dynamics::new(model, DynamicsParams::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let states: Vec<StateVector> = (0..25).map(|_| perturbed(&dynamics, &mut rng, Vector3::zeros())).collect();
    let cmds = dynamics.nominal_commands();
    let batch = dynamics.step_batch(&BatchState::from_states(&states), &cmds, 1e-3).unwrap();
    let worst = states
        .iter()
        .enumerate()
        .map(|(b, s)| (dynamics.step(s, &cmds, 1e-3).unwrap().0 - batch.block(b).0).amax())
        .fold(0.0, f64::max);
    outcome(worst <= 1e-12, format!("max coordinate difference over 25 states {worst:.2e} (<= 1e-12)"))
}

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.5
}

fn ukf_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let params = UkfParams::default();
    let mut affine = 0.0f64;
    for _ in 0..20 {
        let (n, m) = (rng.random_range(1..20), rng.random_range(1..10));
        let mean = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let belief = Belief::new(mean.clone(), random_spd(n, &mut rng)).unwrap();
        let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let c = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let (ym, yc) = unscented_transform(&belief, &params, |x| &a * x + &c).unwrap();
        affine = affine.max((ym - (&a * &mean + &c)).amax()).max((yc - &a * &belief.cov * a.transpose()).amax());
    }

    let (a, h, r, q) = (0.95, 2.0, 0.4, 0.029);
    let p = UkfParams { state_noise: r, range_noise: q, ..UkfParams::default() };
    let mut belief = Belief::isotropic(DVector::from_element(1, 0.5), 1.0);
    let (mut m, mut v, mut truth) = (0.5, 1.0, 0.3);
    let mut kalman = 0.0f64;
    for _ in 0..100 {
        truth = a * truth + rng.random_range(-0.5..0.5);
        let z = h * truth + rng.random_range(-0.1..0.1);
        belief = predict(&belief, &FnProcess(|x: &DVector<f64>, _: f64| x * a), 0.1, &p).unwrap();
        belief = update(&belief, &DVector::from_element(1, z), &DVector::from_element(1, q), &[false], &p, |x| {
            Ok(x * h)
        })
        .unwrap()
        .belief;
        m *= a;
        v = a * a * v + r;
        let k = v * h / (h * h * v + q);
        m += k * (z - h * m);
        v *= 1.0 - k * h;
        kalman = kalman.max((belief.mean[0] - m).abs()).max((belief.cov[(0, 0)] - v).abs());
    }
    outcome(
        affine < 1e-10 && kalman < 1e-8,
        format!("affine transform error {affine:.2e} (< 1e-10), scalar Kalman error {kalman:.2e} (< 1e-8)"),
    )
}

fn run(config: ScenarioConfig) -> ScenarioRun {
    let label = format!("{:?}/{}", config.scenario, config.setting.name());
    run_scenario(config).unwrap_or_else(|e| panic!("{label}: {e}"))
}

fn local_trajectory() -> Outcome {
    let r = run(ScenarioConfig::local());
    let m = &r.metrics;
    let ok = m.tracked.len() == 2 && m.tracked.iter().all(|t| t.rms < 0.05 && t.lag.is_some_and(|l| l > 0.0));
    let parts: Vec<String> = m
        .tracked
        .iter()
        .map(|t| format!("end cap {}: rms {:.4} m, lag {:+.3} s", t.node, t.rms, t.lag.unwrap_or(f64::NAN)))
        .collect();
    outcome(ok, format!("{} (rms < 0.05, lag > 0)", parts.join(", ")))
}

fn global_trajectory() -> Outcome {
    let with = |setting| run(ScenarioConfig { setting, ..ScenarioConfig::global() });
    let full = with(Setting::Full).metrics;
    let four = with(Setting::Anchors4).metrics;
    let blind = with(Setting::NoImu).metrics;
    let centroid = full.post_roll_centroid_error.unwrap_or(f64::INFINITY);
    let com = blind.post_roll_com_error.unwrap_or(f64::INFINITY);
    let recovery = full.spurious_recovery.unwrap_or(f64::INFINITY);
    let rolls = !full.true_transitions.is_empty() && full.all_transitions_detected;
    let ordering = four.mean_cov_trace > full.mean_cov_trace && four.rms < 0.3;
    outcome(
        rolls && centroid < 0.15 && ordering && com < 0.3 && recovery <= 5.0,
        format!(
            "full: {}/{} transitions detected, post-roll centroid {centroid:.3} m (< 0.15), spurious recovery {recovery:.1} s (<= 5); \
             anchors_4: mean trace {:.3} vs full {:.3} (larger), rms {:.3} m (< 0.3); no_imu: post-roll CoM {com:.3} m (< 0.3)",
            full.transitions_detected.iter().filter(|&&d| d).count(),
            full.true_transitions.len(),
            four.mean_cov_trace,
            full.mean_cov_trace,
            four.rms,
        ),
    )
}

fn robustness() -> Outcome {
    let mut c = ScenarioConfig::local();
    c.duration = 120.0;
    c.ranging.nlos.probability = 0.5;
    let r = run(c);
    let rate = r.metrics.packet_acceptance_rate.unwrap_or(0.0);
    let times = &r.estimate.trajectory.times;
    let traces = &r.estimate.cov_trace;
    let mean_in = |a: f64, b: f64| {
        let v: Vec<f64> = times.iter().zip(traces).filter(|(t, _)| **t >= a && **t < b).map(|(_, x)| *x).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let settle = r.metrics.settle_time;
    let (early, late) = (mean_in(settle, settle + 30.0), mean_in(90.0, 120.1));
    let finite = traces.iter().all(|t| t.is_finite());
    let max = r.metrics.max_cov_trace;
    outcome(
        (rate - 0.5).abs() <= 0.05 && finite && max < 100.0 && late <= 2.0 * early,
        format!(
            "{:.1} % rejected (50 +- 5), post-settle max trace {max:.2} (< 100), mean trace {early:.3} early vs {late:.3} in the last 30 s (<= 2x)",
            100.0 * (1.0 - rate)
        ),
    )
}

fn determinism() -> Outcome {
    let mut c = ScenarioConfig::local();
    c.duration = 15.0;
    c.metrics.settle_time = 5.0;
    c.seed = 7;
    let files = |c: ScenarioConfig| {
        let dir = tempfile::tempdir().unwrap();
        let paths = export_run(&run(c), dir.path()).unwrap();
        (std::fs::read(&paths.metrics_json).unwrap(), std::fs::read(&paths.metrics_csv).unwrap())
    };
    let (a, b) = (files(c.clone()), files(c));
    outcome(a == b, format!("metrics.json identical: {}, metrics.csv identical: {}", a.0 == b.0, a.1 == b.1))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("ds-twr correctness", ds_twr),
        ("broadcast scaling", broadcast),
        ("calibration recovery", calibration),
        ("dynamics conservation", conservation),
        ("batch equivalence", batch_equivalence),
        ("ukf exactness", ukf_exactness),
        ("local trajectory", local_trajectory),
        ("global trajectory", global_trajectory),
        ("robustness", robustness),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "{} {:>2} {name}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            k + 1,
            o.detail,
            t0.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

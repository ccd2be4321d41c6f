//! The filter driven by hand: simulate a short actuated run, bundle ranges
//! and bar angles, then track with the unscented Kalman filter.

use nalgebra::Vector3;
use tensegrity_state::harness::{CalibrationMode, Scenario, ScenarioConfig};
use tensegrity_state::ukf::{initial_belief, run_filter, MeasurementBundle, MeasurementModel};

fn main() {
    let mut config = ScenarioConfig::local();
    config.duration = 12.0;
    config.calibration.mode = CalibrationMode::Truth;
    let world = Scenario::new(config).unwrap();
    let c = &world.config;

    let truth = world.simulate_truth().unwrap();
    let active: Vec<usize> = (0..c.anchors.positions.len()).collect();
    let ranges = world.record_run(&truth, &active, &world.true_offsets).unwrap();
    let measurement = MeasurementModel::new(world.model().clone(), world.true_anchors(), c.mount_offset);
    let (bundles, _) = world.bundles(&truth, &ranges, &measurement).unwrap();

    let mut pooled = MeasurementBundle::default();
    for b in bundles.iter().take_while(|b| b.time <= c.filter.init_window) {
        pooled.merge(b);
    }
    let initial = initial_belief(&pooled, &measurement, c.filter.initial_variance).unwrap();
    let start = pooled.time;
    let run = run_filter(
        &bundles,
        &truth.controls,
        initial,
        start,
        c.duration,
        c.filter.rate,
        &measurement,
        Some(&world.dynamics),
        &c.filter.ukf,
    )
    .unwrap();

    println!("{:>5} {:>6} {:>10} {:>10} {:>8}", "t (s)", "meas", "max err", "trace", "nis");
    for step in run.steps.iter().filter(|s| (s.time * 10.0).round() as usize % 10 == 0) {
        let nodes = truth.trajectory.at(step.time).unwrap();
        let err = nodes
            .iter()
            .enumerate()
            .map(|(i, p)| (p - Vector3::from_column_slice(&step.mean[3 * i..3 * i + 3])).norm())
            .fold(0.0, f64::max);
        println!("{:>5.1} {:>6} {:>10.4} {:>10.4} {:>8.1}", step.time, step.measurements, err, step.cov_trace, step.nis);
    }
}

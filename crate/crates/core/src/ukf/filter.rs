use serde::{Deserialize, Serialize};

use super::{predict, Belief, FrozenProcess, MeasurementBundle, MeasurementModel, TensegrityProcess, UkfError, UkfParams};
use crate::dynamics::Dynamics;

/// Actuated rest lengths commanded at `time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSample {
    pub time: f64,
    pub commands: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterStep {
    pub time: f64,
    pub mean: Vec<f64>,
    pub cov_trace: f64,
    pub position_trace: f64,
    /// Per end cap, square root of the trace of its position block.
    pub position_sigma: Vec<f64>,
    pub measurements: usize,
    pub innovation_norm: f64,
    pub nis: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub steps: Vec<FilterStep>,
    pub belief: Belief,
    pub warnings: Vec<String>,
}

fn check_order<'a>(stream: &'static str, times: impl Iterator<Item = &'a f64>) -> Result<(), UkfError> {
    let mut previous = f64::NEG_INFINITY;
    for &t in times {
        if !(t >= previous) {
            return Err(UkfError::Stream { stream, time: t, previous });
        }
        previous = t;
    }
    Ok(())
}

/// Linear interpolation of the control stream, held constant outside it.
fn commands_at(controls: &[ControlSample], t: f64) -> Option<Vec<f64>> {
    let first = controls.first()?;
    if t <= first.time {
        return Some(first.commands.clone());
    }
    let k = controls.partition_point(|c| c.time <= t);
    if k == controls.len() {
        return Some(controls[k - 1].commands.clone());
    }
    let (a, b) = (&controls[k - 1], &controls[k]);
    let f = (t - a.time) / (b.time - a.time);
    Some(a.commands.iter().zip(&b.commands).map(|(x, y)| x + (y - x) * f).collect())
}

/// Runs the filter from `start` to `end`, predicting every `1 / rate` s and
/// fusing every bundle stamped inside the elapsed interval. Without
/// `dynamics` the state is held still between updates.
#[allow(clippy::too_many_arguments)]
pub fn run_filter(
    bundles: &[MeasurementBundle],
    controls: &[ControlSample],
    initial: Belief,
    start: f64,
    end: f64,
    rate: f64,
    measurement: &MeasurementModel,
    dynamics: Option<&Dynamics>,
    params: &UkfParams,
) -> Result<FilterRun, UkfError> {
    params.validate()?;
    if !(rate > 0.0) {
        return Err(UkfError::InvalidParameter { name: "rate", value: rate });
    }
    check_order("measurement", bundles.iter().map(|b| &b.time))?;
    check_order("control", controls.iter().map(|c| &c.time))?;
    for b in bundles {
        measurement.validate(b)?;
    }
    let dt = 1.0 / rate;
    let count = ((end - start) / dt + 1e-9).floor().max(0.0) as usize;
    let nominal = dynamics.map(|d| d.nominal_commands()).unwrap_or_default();
    let mut belief = initial;
    let mut steps = Vec::with_capacity(count);
    let mut warnings = Vec::new();
    let mut next = bundles.partition_point(|b| b.time <= start);
    let mut previous = start;
    for k in 1..=count {
        let t = start + k as f64 * dt;
        belief = match dynamics {
            Some(d) => {
                let from = commands_at(controls, previous).unwrap_or_else(|| nominal.clone());
                let to = commands_at(controls, t).unwrap_or_else(|| nominal.clone());
                predict(&belief, &TensegrityProcess { dynamics: d, from: &from, to: &to }, t - previous, params)?
            }
            None => predict(&belief, &FrozenProcess, t - previous, params)?,
        };
        let mut bundle = MeasurementBundle { time: t, ..Default::default() };
        while next < bundles.len() && bundles[next].time <= t {
            bundle.merge(&bundles[next]);
            next += 1;
        }
        let outcome = measurement.update(&belief, &bundle, params)?;
        if let Some(w) = &outcome.warning {
            warnings.push(format!("t = {t:.3}: {w}"));
        }
        belief = outcome.belief;
        steps.push(FilterStep {
            time: t,
            mean: belief.mean.iter().copied().collect(),
            cov_trace: belief.trace(),
            position_trace: belief.position_trace(),
            position_sigma: (0..belief.dim() / 6)
                .map(|i| (0..3).map(|c| belief.cov[(3 * i + c, 3 * i + c)]).sum::<f64>().sqrt())
                .collect(),
            measurements: bundle.len(),
            innovation_norm: outcome.innovation_norm,
            nis: outcome.nis,
        });
        previous = t;
    }
    Ok(FilterRun { steps, belief, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::desk_anchors;
    use crate::ranging::ModuleId;
    use crate::structure::{build_superball, SuperballParams};
    use crate::ukf::{RangeEnd, RangeObservation};
    use nalgebra::{DVector, Vector3};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn setup() -> (MeasurementModel, DVector<f64>) {
        let model = build_superball(&SuperballParams::default()).unwrap();
        let anchors = desk_anchors().into_iter().enumerate().map(|(i, p)| (i as ModuleId, p)).collect();
        let mut truth = DVector::zeros(72);
        for (i, p) in model.reference_nodes().positions.iter().enumerate() {
            truth.fixed_rows_mut::<3>(3 * i).copy_from(&(p + Vector3::new(5.0, 4.0, 0.9)));
        }
        (MeasurementModel::new(model, anchors, 0.1), truth)
    }

    fn range_bundles(mm: &MeasurementModel, truth: &DVector<f64>, steps: usize, sigma: f64, seed: u64) -> Vec<MeasurementBundle> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        (1..=steps)
            .map(|k| {
                let mut b = MeasurementBundle { time: k as f64 * 0.1, ..Default::default() };
                for a in 0..8 {
                    for n in 0..12 {
                        b.ranges.push(RangeObservation { a: RangeEnd::Anchor(a), b: RangeEnd::Node(n), range: 0.0 });
                    }
                }
                let z = mm.predict(truth, &b).unwrap();
                for (obs, v) in b.ranges.iter_mut().zip(z.iter()) {
                    obs.range = v + noise.sample(&mut rng);
                }
                b
            })
            .collect()
    }

    #[test]
    fn controls_interpolate_and_hold() {
        let c = vec![
            ControlSample { time: 0.0, commands: vec![1.0] },
            ControlSample { time: 1.0, commands: vec![2.0] },
        ];
        assert_eq!(commands_at(&c, -1.0), Some(vec![1.0]));
        assert_eq!(commands_at(&c, 0.25), Some(vec![1.25]));
        assert_eq!(commands_at(&c, 5.0), Some(vec![2.0]));
        assert_eq!(commands_at(&[], 0.0), None);
    }

    #[test]
    fn out_of_order_stream_is_rejected() {
        let (mm, truth) = setup();
        let mut b = range_bundles(&mm, &truth, 3, 0.0, 1);
        b.swap(0, 2);
        let err = run_filter(&b, &[], Belief::isotropic(truth, 1.0), 0.0, 0.3, 10.0, &mm, None, &UkfParams::default());
        assert!(matches!(err, Err(UkfError::Stream { stream: "measurement", .. })));
    }

    #[test]
    fn angle_only_translation_is_unobservable() {
        let (mm, truth) = setup();
        let angles = mm.imu_angles(&truth, 85.0).unwrap();
        let bundles: Vec<MeasurementBundle> = (1..=200)
            .map(|k| MeasurementBundle { time: k as f64 * 0.1, angles: angles.clone(), ranges: vec![] })
            .collect();
        let run =
            run_filter(&bundles, &[], Belief::isotropic(truth, 1.0), 0.0, 20.0, 10.0, &mm, None, &UkfParams::default())
                .unwrap();
        let centroid_var = |b: &Belief| {
            let mut v = 0.0;
            for i in 0..12 {
                for j in 0..12 {
                    v += b.cov[(3 * i, 3 * j)];
                }
            }
            v / 144.0
        };
        let traces: Vec<f64> = run.steps.iter().map(|s| s.position_trace).collect();
        assert!(traces.windows(2).all(|w| w[1] > w[0]));
        // common-mode x variance grows by λ_y / 12 per step
        let v = centroid_var(&run.belief);
        assert!(v > 0.8 * 200.0 * 0.4 / 12.0, "{v}");
    }

    #[test]
    fn stationary_ranges_converge() {
        let (mm, truth) = setup();
        let bundles = range_bundles(&mm, &truth, 100, 0.0, 2);
        let mut start = truth.clone();
        for i in 0..36 {
            start[i] += if i % 3 == 0 { 0.3 } else { -0.2 };
        }
        let run =
            run_filter(&bundles, &[], Belief::isotropic(start, 1.0), 0.0, 10.0, 10.0, &mm, None, &UkfParams::default())
                .unwrap();
        let err = (run.belief.mean.rows(0, 36) - truth.rows(0, 36)).norm() / 12f64.sqrt();
        assert!(err < 0.05, "{err}");
        assert_eq!(run.steps.len(), 100);
        assert!(run.steps.iter().all(|s| s.measurements == 96));
    }

    #[test]
    fn covariance_stays_symmetric_and_definite() {
        let (mm, truth) = setup();
        let bundles = range_bundles(&mm, &truth, 1000, 0.1, 3);
        let mut belief = Belief::isotropic(truth.clone(), 1.0);
        let p = UkfParams::default();
        for b in &bundles {
            belief = predict(&belief, &FrozenProcess, 0.1, &p).unwrap();
            belief = mm.update(&belief, b, &p).unwrap().belief;
            assert!(belief.asymmetry() < 1e-9);
            assert!(belief.cov.clone().cholesky().is_some());
        }
    }

    #[test]
    fn fewer_measurements_never_shrink_covariance_more() {
        let (mm, truth) = setup();
        let full = range_bundles(&mm, &truth, 30, 0.05, 4);
        let subset: Vec<MeasurementBundle> = full
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let mut s = b.clone();
                s.ranges = b.ranges.iter().copied().enumerate().filter(|(i, _)| (i + k) % 3 != 0).map(|(_, r)| r).collect();
                s
            })
            .collect();
        let p = UkfParams::default();
        let init = Belief::isotropic(truth, 1.0);
        let a = run_filter(&full, &[], init.clone(), 0.0, 3.0, 10.0, &mm, None, &p).unwrap();
        let b = run_filter(&subset, &[], init, 0.0, 3.0, 10.0, &mm, None, &p).unwrap();
        for (x, y) in a.steps.iter().zip(&b.steps) {
            assert!(y.cov_trace >= x.cov_trace, "t={}: {} < {}", x.time, y.cov_trace, x.cov_trace);
        }
    }

    #[test]
    fn reruns_are_bit_identical() {
        let (mm, truth) = setup();
        let bundles = range_bundles(&mm, &truth, 20, 0.1, 5);
        let init = Belief::isotropic(truth, 1.0);
        let p = UkfParams::default();
        let a = run_filter(&bundles, &[], init.clone(), 0.0, 2.0, 10.0, &mm, None, &p).unwrap();
        let b = run_filter(&bundles, &[], init, 0.0, 2.0, 10.0, &mm, None, &p).unwrap();
        assert_eq!(a, b);
    }
}

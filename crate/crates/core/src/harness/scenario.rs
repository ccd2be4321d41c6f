use std::collections::BTreeMap;

use nalgebra::{DVector, Rotation3, UnitQuaternion, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::config::{CalibrationMode, ScenarioConfig, ScenarioKind};
use super::metrics::{compute_metrics, EstimateSeries, RunMetrics, Trajectory};
use super::HarnessError;
use crate::calibration::{
    calibrate, internal_offsets, AnchorPrior, CalibrationConfig, CalibrationDataset, CalibrationFile, Hemisphere,
    PriorsFile,
};
use crate::dynamics::{Dynamics, SpoolLimiter, StateVector};
use crate::ranging::{
    broadcast_round, packets_per_round, sensor_position, ClockModel, LogRecord, Module, ModuleId, ModuleRole,
    OffsetTable, RangingMeasurement, RoundConfig,
};
use crate::structure::{build_superball, cable_triangles, NodeSet, TensegrityModel};
use crate::ukf::{
    initial_belief, run_filter, AngleKind, ControlSample, FilterStep, MeasurementBundle, MeasurementModel, RangeEnd,
    RangeObservation,
};

/// Truth samples per second kept for scoring and for ranging geometry.
const TRUTH_RATE: f64 = 200.0;
const CONTROL_RATE: f64 = 100.0;

/// Ground truth of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRun {
    pub trajectory: Trajectory,
    /// Spool-limited commands actually applied.
    pub controls: Vec<ControlSample>,
}

/// Static calibration recording: one broadcast round per random pose.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSession {
    pub log: Vec<LogRecord>,
    /// True sensor positions per pose.
    pub poses: Vec<Vec<Vector3<f64>>>,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub config: ScenarioConfig,
    pub truth: Trajectory,
    pub steps: Vec<FilterStep>,
    pub estimate: EstimateSeries,
    /// Every distance reported during the run.
    pub ranging: Vec<LogRecord>,
    /// `None` when the true calibration was used.
    pub calibration: Option<CalibrationFile>,
    pub filter_start: f64,
    pub metrics: RunMetrics,
    pub warnings: Vec<String>,
}

/// Resting on `face` with its outward normal pointing down, centred at
/// `(x, y)` after a `yaw` turn, lowest end cap 1 cm above the ground.
pub fn resting_pose(model: &TensegrityModel, face: [usize; 3], x: f64, y: f64, yaw: f64) -> StateVector {
    let p = model.reference_nodes().positions;
    let centre = p.iter().sum::<Vector3<f64>>() / p.len() as f64;
    let face_centre = face.iter().map(|&i| p[i]).sum::<Vector3<f64>>() / 3.0;
    let mut normal = (p[face[1]] - p[face[0]]).cross(&(p[face[2]] - p[face[0]])).normalize();
    if normal.dot(&(face_centre - centre)) < 0.0 {
        normal = -normal;
    }
    let down = Rotation3::rotation_between(&normal, &-Vector3::z()).unwrap_or_else(|| {
        Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI)
    });
    let turn = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
    let placed: Vec<Vector3<f64>> = p.iter().map(|q| turn * down * (q - centre)).collect();
    let low = placed.iter().map(|q| q.z).fold(f64::INFINITY, f64::min);
    let shift = Vector3::new(x, y, 0.01 - low);
    StateVector::from_nodes(&NodeSet::new(placed.iter().map(|q| q + shift).collect()))
}

fn random_rotation<R: Rng>(rng: &mut R) -> UnitQuaternion<f64> {
    let v = Vector4::from_fn(|_, _| StandardNormal.sample(rng));
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(v))
}

fn state_of(nodes: &[Vector3<f64>]) -> DVector<f64> {
    let mut s = DVector::zeros(6 * nodes.len());
    for (i, p) in nodes.iter().enumerate() {
        s.fixed_rows_mut::<3>(3 * i).copy_from(p);
    }
    s
}

/// Calibrates from a recorded log. Records sharing a time stamp form one
/// sample; modules that computed distances are the robot's.
pub fn calibrate_log(
    records: &[LogRecord],
    priors: &PriorsFile,
    config: &CalibrationConfig,
) -> Result<CalibrationFile, HarnessError> {
    let (anchor_ids, float_ids) = CalibrationDataset::roles_from_log(records);
    let bars = priors.bar_indices(&float_ids);
    let mut ds = CalibrationDataset::from_log(records, anchor_ids, float_ids, bars, priors.bar_length)?;
    if let Some(n) = priors.samples {
        ds = ds.subsample(n, config.seed);
    }
    let result = calibrate(&ds, &priors.anchors, priors.hemisphere.as_ref(), config)?;
    let internal = internal_offsets(&result, &ds, config.min_internal_samples)?;
    Ok(CalibrationFile::from_result(&result, Some(&internal)))
}

/// A configured world: robot model, dynamics, modules and their hidden
/// offsets.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub dynamics: Dynamics,
    /// Anchors first, then one module per end cap.
    pub modules: Vec<Module>,
    pub true_offsets: OffsetTable,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let model = match &config.model_file {
            Some(path) => TensegrityModel::load(path)?,
            None => build_superball(&config.superball)?,
        };
        config.actuation.validate(model.actuated_indices().len())?;
        let dynamics = Dynamics::new(model, config.dynamics.clone())?;

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let skew = config.ranging.clock_skew_ppm * 1e-6;
        let clock = |rng: &mut ChaCha8Rng| ClockModel {
            offset: rng.random_range(0.0..1.0),
            skew: if skew > 0.0 { rng.random_range(-skew..=skew) } else { 0.0 },
            quantum: ClockModel::DEFAULT_QUANTUM,
        };
        let mut modules = Vec::new();
        for k in 0..config.anchors.positions.len() {
            modules.push(Module { id: config.anchors.id(k), clock: clock(&mut rng), role: ModuleRole::Anchor });
        }
        for node in 0..dynamics.model().node_count() {
            let id = config.ranging.robot_first_id + node as ModuleId;
            modules.push(Module { id, clock: clock(&mut rng), role: ModuleRole::Robot });
        }
        let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let mut true_offsets = OffsetTable::default();
        for a in modules.iter().filter(|m| m.role == ModuleRole::Anchor) {
            for r in modules.iter().filter(|m| m.role == ModuleRole::Robot) {
                true_offsets.set(a.id, r.id, draw(&mut rng, config.ranging.offset_range));
            }
        }
        let robots: Vec<ModuleId> =
            modules.iter().filter(|m| m.role == ModuleRole::Robot).map(|m| m.id).collect();
        for (k, &a) in robots.iter().enumerate() {
            for &b in &robots[k + 1..] {
                true_offsets.set(a, b, draw(&mut rng, config.ranging.internal_offset_range));
            }
        }
        Ok(Self { config, dynamics, modules, true_offsets })
    }

    pub fn model(&self) -> &TensegrityModel {
        self.dynamics.model()
    }

    fn anchor_count(&self) -> usize {
        self.config.anchors.positions.len()
    }

    pub fn robot_id(&self, node: usize) -> ModuleId {
        self.config.ranging.robot_first_id + node as ModuleId
    }

    fn round_config(&self) -> RoundConfig {
        RoundConfig {
            slot_spacing: self.config.ranging.slot_spacing,
            channel: self.config.ranging.channel,
            nlos: self.config.ranging.nlos,
        }
    }

    /// True anchor positions by id.
    pub fn true_anchors(&self) -> BTreeMap<ModuleId, Vector3<f64>> {
        (0..self.anchor_count()).map(|k| (self.config.anchors.id(k), self.config.anchors.position(k))).collect()
    }

    fn sensor_positions(&self, nodes: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        (0..nodes.len())
            .map(|k| sensor_position(self.model(), nodes, k, self.config.mount_offset).unwrap_or(nodes[k]))
            .collect()
    }

    /// What the calibration solver is told up front.
    pub fn priors(&self) -> PriorsFile {
        let layout = &self.config.anchors;
        let reference = self.sensor_positions(&self.model().reference_nodes().positions);
        let bars: Vec<[ModuleId; 2]> = self.model().bars().map(|(_, i, j)| [self.robot_id(i), self.robot_id(j)]).collect();
        let bar_length = self.model().bars().next().map_or(0.0, |(_, i, j)| (reference[i] - reference[j]).norm());
        PriorsFile {
            anchors: layout
                .priors
                .iter()
                .map(|&k| {
                    let p = layout.position(k);
                    AnchorPrior { id: layout.id(k), position: [p.x, p.y, p.z] }
                })
                .collect(),
            hemisphere: Some(Hemisphere { anchor: layout.id(layout.hemisphere_anchor), side: layout.hemisphere_side }),
            bars,
            bar_length,
            samples: None,
        }
    }

    /// The robot's sensor constellation held still at random poses inside
    /// the anchor hull, one broadcast round each, every anchor active and
    /// no corrections applied. Record times are the pose index in seconds.
    pub fn calibration_session(&self) -> Result<CalibrationSession, HarnessError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_add(1));
        let anchors: Vec<Vector3<f64>> = (0..self.anchor_count()).map(|k| self.config.anchors.position(k)).collect();
        let (lo, hi) = anchors.iter().fold((Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY)), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        });
        let inset = |a: f64, b: f64| {
            let m = (0.2 * (b - a)).min(2.0);
            (a + m, (b - m).max(a + m + 1e-6))
        };
        let (xr, yr) = (inset(lo.x, hi.x), inset(lo.y, hi.y));
        let body = self.sensor_positions(&self.model().reference_nodes().positions);
        let centroid = body.iter().sum::<Vector3<f64>>() / body.len() as f64;
        let config = self.round_config();
        let none = OffsetTable::default();
        let mut log = Vec::new();
        let mut poses = Vec::with_capacity(self.config.calibration.samples);
        for k in 0..self.config.calibration.samples {
            let rot = random_rotation(&mut rng);
            let rotated: Vec<Vector3<f64>> = body.iter().map(|p| rot * (p - centroid)).collect();
            let lowest = rotated.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
            let shift = Vector3::new(
                rng.random_range(xr.0..xr.1),
                rng.random_range(yr.0..yr.1),
                rng.random_range(0.05..0.3) - lowest,
            );
            let sensors: Vec<Vector3<f64>> = rotated.iter().map(|p| p + shift).collect();
            let positions: Vec<Vector3<f64>> = anchors.iter().chain(&sensors).copied().collect();
            let t = k as f64;
            let round = broadcast_round(&self.modules, t, |_| positions.clone(), &self.true_offsets, &none, &config, &mut rng)?;
            log.extend(round.measurements.iter().map(|m| LogRecord { t, ..LogRecord::from(m) }));
            poses.push(sensors);
        }
        Ok(CalibrationSession { log, poses })
    }

    pub fn calibrate(&self, session: &CalibrationSession) -> Result<CalibrationFile, HarnessError> {
        let config = CalibrationConfig { seed: self.config.seed.wrapping_add(1), ..CalibrationConfig::default() };
        calibrate_log(&session.log, &self.priors(), &config)
    }

    /// Settled start state.
    pub fn start_state(&self) -> Result<StateVector, HarnessError> {
        let start = &self.config.start;
        let face = match start.face {
            Some(f) => f,
            None => *cable_triangles(self.model())
                .first()
                .ok_or_else(|| HarnessError::Scenario("model has no closed cable triangle to rest on".into()))?,
        };
        let pose = resting_pose(self.model(), face, start.x, start.y, start.yaw);
        if start.settle > 0.0 {
            Ok(self.dynamics.settle(&pose, 1e-3, start.settle)?)
        } else {
            Ok(pose)
        }
    }

    /// Integrates the scripted run at the dynamics step.
    pub fn simulate_truth(&self) -> Result<TruthRun, HarnessError> {
        let dt = self.dynamics.params().dt;
        let steps = (self.config.duration / dt).round() as usize;
        let truth_every = ((1.0 / TRUTH_RATE) / dt).round().max(1.0) as usize;
        let control_every = ((1.0 / CONTROL_RATE) / dt).round().max(1.0) as usize;
        let nominal = self.dynamics.nominal_commands();
        let mut limiter = SpoolLimiter::new(nominal.clone(), self.dynamics.params().max_spool_rate);
        let mut state = self.start_state()?;
        let mut trajectory = Trajectory::default();
        let mut controls = Vec::new();
        trajectory.push(0.0, state.positions());
        controls.push(ControlSample { time: 0.0, commands: nominal.clone() });
        for k in 0..steps {
            let t = k as f64 * dt;
            let target = self.config.actuation.target(t, &nominal);
            let commands = limiter.advance(&target, dt).to_vec();
            state = self.dynamics.step(&state, &commands, dt).map_err(|e| HarnessError::Aborted {
                time: t,
                message: format!("{e}; lowest end cap at z = {:.3}", state.positions().iter().map(|p| p.z).fold(f64::INFINITY, f64::min)),
            })?;
            let now = (k + 1) as f64 * dt;
            if (k + 1) % truth_every == 0 {
                trajectory.push(now, state.positions());
            }
            if (k + 1) % control_every == 0 {
                controls.push(ControlSample { time: now, commands });
            }
        }
        Ok(TruthRun { trajectory, controls })
    }

    /// Broadcast rounds over the run with the anchors in `active` (indices
    /// into the layout) and the robot's modules.
    pub fn record_run(
        &self,
        truth: &TruthRun,
        active: &[usize],
        corrections: &OffsetTable,
    ) -> Result<Vec<RangingMeasurement>, HarnessError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_add(2));
        let active_ids: Vec<ModuleId> = active.iter().map(|&k| self.config.anchors.id(k)).collect();
        let modules: Vec<Module> = self
            .modules
            .iter()
            .filter(|m| m.role == ModuleRole::Robot || active_ids.contains(&m.id))
            .copied()
            .collect();
        let anchor_pos: Vec<Vector3<f64>> = active.iter().map(|&k| self.config.anchors.position(k)).collect();
        let config = self.round_config();
        let length = packets_per_round(modules.len()) as f64 * config.slot_spacing;
        let end = truth.trajectory.times.last().copied().unwrap_or(0.0);
        let mut out = Vec::new();
        let mut k = 0usize;
        loop {
            let start = k as f64 / self.config.ranging.round_rate;
            if start + length > end {
                break;
            }
            let positions = |t: f64| {
                let nodes = truth.trajectory.at(t).expect("inside the truth span");
                anchor_pos.iter().copied().chain(self.sensor_positions(&nodes)).collect()
            };
            let round = broadcast_round(&modules, start, positions, &self.true_offsets, corrections, &config, &mut rng)?;
            out.extend(round.measurements);
            k += 1;
        }
        Ok(out)
    }

    fn range_end(&self, id: ModuleId) -> RangeEnd {
        let first = self.config.ranging.robot_first_id;
        let nodes = self.model().node_count() as ModuleId;
        if (first..first + nodes).contains(&id) {
            RangeEnd::Node((id - first) as usize)
        } else {
            RangeEnd::Anchor(id)
        }
    }

    /// Bundles accepted ranges and IMU angles at the filter rate. Returns
    /// the bundles and the tick carrying the spurious angle, if any.
    pub fn bundles(
        &self,
        truth: &TruthRun,
        measurements: &[RangingMeasurement],
        measurement: &MeasurementModel,
    ) -> Result<(Vec<MeasurementBundle>, Option<f64>), HarnessError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_add(3));
        let ukf = &self.config.filter.ukf;
        let sigma = self.config.imu.angle_sigma.unwrap_or(ukf.angle_noise.sqrt());
        let noise = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"));
        let rate = self.config.filter.rate;
        let ticks = (self.config.duration * rate + 1e-9).floor() as usize;
        let mut accepted: Vec<&RangingMeasurement> = measurements.iter().filter(|m| m.accepted).collect();
        accepted.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut next = 0;
        let mut spurious = self.config.imu.spurious.filter(|_| self.config.setting.uses_imu());
        let mut injected = None;
        let mut out = Vec::with_capacity(ticks);
        for k in 1..=ticks {
            let t = k as f64 / rate;
            let mut bundle = MeasurementBundle { time: t, ..Default::default() };
            let seen = t - self.config.filter.latency;
            while next < accepted.len() && accepted[next].time <= seen {
                let m = accepted[next];
                bundle.ranges.push(RangeObservation {
                    a: self.range_end(m.initiator),
                    b: self.range_end(m.responder),
                    range: m.corrected,
                });
                next += 1;
            }
            if self.config.setting.uses_imu() {
                if let Some(nodes) = truth.trajectory.at(seen.max(0.0)) {
                    let mut angles = measurement.imu_angles(&state_of(&nodes), ukf.gimbal_limit_deg)?;
                    if let Some(n) = &noise {
                        for a in &mut angles {
                            a.angle += n.sample(&mut rng);
                        }
                    }
                    if let Some(s) = spurious.filter(|s| t >= s.time) {
                        if let Some(a) = angles.iter_mut().find(|a| a.bar == s.bar && a.kind == AngleKind::Pitch) {
                            a.angle += s.error;
                            injected = Some(t);
                        }
                        spurious = None;
                    }
                    bundle.angles = angles;
                }
            }
            out.push(bundle);
        }
        Ok((out, injected))
    }

    /// Full pipeline: calibration, truth, streams, filter and scoring.
    pub fn run(&self) -> Result<ScenarioRun, HarnessError> {
        let config = &self.config;
        let (anchors, mut corrections, calibration) = match config.calibration.mode {
            CalibrationMode::Truth => (self.true_anchors(), self.true_offsets.clone(), None),
            CalibrationMode::Solve => {
                let file = self.calibrate(&self.calibration_session()?)?;
                (file.anchor_positions(), file.offsets.clone(), Some(file))
            }
        };
        if config.setting == super::Setting::FullConstOffset {
            corrections = corrections.with_constant(corrections.mean());
        }
        let active = config.anchors.active(config.setting);
        let active_anchors: BTreeMap<ModuleId, Vector3<f64>> = active
            .iter()
            .map(|&k| {
                let id = config.anchors.id(k);
                anchors.get(&id).map(|p| (id, *p)).ok_or_else(|| {
                    HarnessError::Scenario(format!("calibration did not produce anchor {id}"))
                })
            })
            .collect::<Result<_, _>>()?;
        let measurement = MeasurementModel::new(self.model().clone(), active_anchors, config.mount_offset);

        let truth = self.simulate_truth()?;
        let ranging = self.record_run(&truth, &active, &corrections)?;
        let (bundles, injected) = self.bundles(&truth, &ranging, &measurement)?;

        let mut pooled = MeasurementBundle::default();
        let (start, initial) = bundles
            .iter()
            .find_map(|b| {
                pooled.merge(&MeasurementBundle { angles: Vec::new(), ..b.clone() });
                if b.time + 1e-9 < config.filter.init_window {
                    return None;
                }
                initial_belief(&pooled, &measurement, config.filter.initial_variance).ok().map(|x| (b.time, x))
            })
            .ok_or_else(|| HarnessError::Scenario("no bundle localizes three end caps".into()))?;
        let run = run_filter(
            &bundles,
            &truth.controls,
            initial,
            start,
            config.duration,
            config.filter.rate,
            &measurement,
            Some(&self.dynamics),
            &config.filter.ukf,
        )?;
        let estimate = EstimateSeries::from_steps(&run.steps);
        let mut metrics = compute_metrics(&truth.trajectory, &estimate, injected, &config.metrics)?;
        metrics.packets = ranging.len();
        metrics.packet_acceptance_rate =
            (!ranging.is_empty()).then(|| ranging.iter().filter(|m| m.accepted).count() as f64 / ranging.len() as f64);
        metrics.filter_warnings = run.warnings.len();
        Ok(ScenarioRun {
            config: config.clone(),
            truth: truth.trajectory,
            steps: run.steps,
            estimate,
            ranging: ranging.iter().map(LogRecord::from).collect(),
            calibration,
            filter_start: start,
            metrics,
            warnings: run.warnings,
        })
    }
}

pub fn run_scenario(config: ScenarioConfig) -> Result<ScenarioRun, HarnessError> {
    Scenario::new(config)?.run()
}

/// Runs `config` as the stay-in-place deformation scenario.
pub fn run_local_scenario(config: ScenarioConfig) -> Result<ScenarioRun, HarnessError> {
    run_scenario(ScenarioConfig { scenario: ScenarioKind::Local, ..config })
}

/// Runs `config` as the rolling scenario; the script must roll the robot.
pub fn run_global_scenario(config: ScenarioConfig) -> Result<ScenarioRun, HarnessError> {
    let run = run_scenario(ScenarioConfig { scenario: ScenarioKind::Global, ..config })?;
    if run.metrics.true_transitions.is_empty() {
        return Err(HarnessError::Scenario("actuation script produced no face transition".into()));
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ActuationScript;

    fn short(duration: f64) -> ScenarioConfig {
        let mut c = ScenarioConfig::local();
        c.duration = duration;
        c.start.settle = 5.0;
        c.calibration.mode = CalibrationMode::Truth;
        c.metrics.settle_time = 0.0;
        c
    }

    #[test]
    fn resting_pose_puts_face_on_the_ground() {
        let model = build_superball(&Default::default()).unwrap();
        for face in cable_triangles(&model) {
            let s = resting_pose(&model, face, 1.0, 2.0, 0.3);
            let z: Vec<f64> = face.iter().map(|&i| s.position(i).z).collect();
            for v in &z {
                assert!((v - 0.01).abs() < 1e-9, "{face:?} {z:?}");
            }
            assert!(s.positions().iter().all(|p| p.z >= 0.01 - 1e-9));
        }
    }

    #[test]
    fn same_seed_same_world() {
        let a = Scenario::new(short(1.0)).unwrap();
        let b = Scenario::new(short(1.0)).unwrap();
        assert_eq!(a.modules, b.modules);
        assert_eq!(a.true_offsets, b.true_offsets);
        let c = Scenario::new(ScenarioConfig { seed: 9, ..short(1.0) }).unwrap();
        assert_ne!(a.true_offsets, c.true_offsets);
    }

    #[test]
    fn rounds_follow_the_round_rate() {
        let s = Scenario::new(short(2.0)).unwrap();
        let truth = s.simulate_truth().unwrap();
        let all: Vec<usize> = (0..8).collect();
        let m = s.record_run(&truth, &all, &OffsetTable::default()).unwrap();
        // rounds start every 1/15 s and last 60 ms: 30 fit in 2 s
        let full = 30 * 12 * 19;
        assert!(m.len() <= full && m.len() > full * 9 / 10, "{}", m.len());
        assert!(m.iter().all(|r| r.time < 2.0));
    }

    #[test]
    fn calibration_session_logs_group_by_pose() {
        let mut c = short(1.0);
        c.calibration.samples = 5;
        let s = Scenario::new(c).unwrap();
        let session = s.calibration_session().unwrap();
        assert_eq!(session.poses.len(), 5);
        let times: std::collections::BTreeSet<u64> = session.log.iter().map(|r| r.t as u64).collect();
        assert_eq!(times.len(), 5);
        let ds = CalibrationDataset::from_log(&session.log, (0..8).collect(), (8..20).collect(), vec![], 1.0).unwrap();
        assert_eq!(ds.samples.len(), 5);
    }

    #[test]
    fn held_robot_is_tracked_with_true_calibration() {
        let mut c = short(6.0);
        c.actuation = ActuationScript::Hold;
        let run = run_scenario(c).unwrap();
        assert!(run.metrics.rms < 0.1, "{:?}", run.metrics.endcap_rms);
        assert_eq!(run.steps.len(), run.estimate.trajectory.len());
        assert!(run.metrics.true_transitions.is_empty());
    }

    #[test]
    fn global_requires_a_roll() {
        let mut c = short(2.0);
        c.actuation = ActuationScript::Hold;
        c.setting = crate::harness::Setting::NoImu;
        assert!(matches!(run_global_scenario(c), Err(HarnessError::Scenario(_))));
    }
}

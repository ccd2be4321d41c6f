use std::collections::BTreeMap;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::{update, Belief, UkfError, UkfParams, UpdateOutcome};
use crate::geometry::{fit_rigid, linear_multilateration, multilaterate};
use crate::ranging::{sensor_position, ModuleId};
use crate::structure::{GeometryError, TensegrityModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeEnd {
    Anchor(ModuleId),
    /// Sensor mounted near this end cap.
    Node(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeObservation {
    pub a: RangeEnd,
    pub b: RangeEnd,
    /// Offset-corrected distance (m).
    pub range: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleKind {
    /// Elevation of the bar axis above the horizontal.
    Pitch,
    /// Heading of the bar axis about the vertical; undefined for vertical
    /// bars.
    Roll,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleObservation {
    /// Index into [`MeasurementModel::bars`].
    pub bar: usize,
    pub kind: AngleKind,
    pub angle: f64,
}

/// Everything measured during one filter interval. Either part may be empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasurementBundle {
    pub time: f64,
    pub angles: Vec<AngleObservation>,
    pub ranges: Vec<RangeObservation>,
}

impl MeasurementBundle {
    pub fn len(&self) -> usize {
        self.angles.len() + self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends `other`, keeping the later time.
    pub fn merge(&mut self, other: &MeasurementBundle) {
        self.time = self.time.max(other.time);
        self.angles.extend_from_slice(&other.angles);
        self.ranges.extend_from_slice(&other.ranges);
    }

    /// Stacked measurement vector: angles, then ranges.
    pub fn values(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.angles.iter().map(|a| a.angle).chain(self.ranges.iter().map(|r| r.range)),
        )
    }

    pub fn angular_mask(&self) -> Vec<bool> {
        let mut m = vec![true; self.angles.len()];
        m.resize(self.len(), false);
        m
    }

    /// Diagonal of the block noise covariance `[λ_θ I_b, λ_r I_a]`.
    pub fn noise(&self, params: &UkfParams) -> DVector<f64> {
        DVector::from_fn(self.len(), |i, _| {
            if i < self.angles.len() {
                params.angle_noise
            } else {
                params.range_noise
            }
        })
    }
}

/// `(pitch, roll)` of a bar axis.
pub fn bar_angles(axis: &Vector3<f64>) -> (f64, f64) {
    let horizontal = axis.x.hypot(axis.y);
    let pitch = axis.z.atan2(horizontal);
    let roll = if horizontal <= 1e-12 * axis.norm() { 0.0 } else { axis.y.atan2(axis.x) };
    (pitch, roll)
}

/// Predicts bundles from a state: sensor geometry, calibrated anchors and
/// the bar list.
#[derive(Debug, Clone)]
pub struct MeasurementModel {
    model: TensegrityModel,
    bars: Vec<(usize, usize)>,
    anchors: BTreeMap<ModuleId, Vector3<f64>>,
    mount_offset: f64,
}

impl MeasurementModel {
    pub fn new(model: TensegrityModel, anchors: BTreeMap<ModuleId, Vector3<f64>>, mount_offset: f64) -> Self {
        let bars = model.bars().map(|(_, i, j)| (i, j)).collect();
        Self { model, bars, anchors, mount_offset }
    }

    pub fn model(&self) -> &TensegrityModel {
        &self.model
    }

    /// End-cap pairs, axis pointing from the first to the second.
    pub fn bars(&self) -> &[(usize, usize)] {
        &self.bars
    }

    pub fn anchors(&self) -> &BTreeMap<ModuleId, Vector3<f64>> {
        &self.anchors
    }

    pub fn mount_offset(&self) -> f64 {
        self.mount_offset
    }

    pub fn state_dim(&self) -> usize {
        6 * self.model.node_count()
    }

    pub fn validate(&self, bundle: &MeasurementBundle) -> Result<(), UkfError> {
        let n = self.model.node_count();
        for a in &bundle.angles {
            if a.bar >= self.bars.len() {
                return Err(UkfError::UnknownId { what: "bar", id: a.bar });
            }
        }
        for r in &bundle.ranges {
            for end in [r.a, r.b] {
                match end {
                    RangeEnd::Anchor(id) if !self.anchors.contains_key(&id) => {
                        return Err(UkfError::UnknownId { what: "anchor", id: id as usize })
                    }
                    RangeEnd::Node(k) if k >= n => return Err(UkfError::UnknownId { what: "node", id: k }),
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn positions(&self, state: &DVector<f64>) -> Result<Vec<Vector3<f64>>, UkfError> {
        let n = self.model.node_count();
        if state.len() < 3 * n {
            return Err(UkfError::Dimension { expected: 6 * n, actual: state.len() });
        }
        Ok((0..n).map(|i| Vector3::new(state[3 * i], state[3 * i + 1], state[3 * i + 2])).collect())
    }

    /// Sensor position of every end cap.
    pub fn sensor_positions(&self, state: &DVector<f64>) -> Result<Vec<Vector3<f64>>, UkfError> {
        let pos = self.positions(state)?;
        (0..pos.len())
            .map(|k| sensor_position(&self.model, &pos, k, self.mount_offset).map_err(UkfError::from))
            .collect()
    }

    /// Predicted measurement vector in the layout of `bundle`; ids are assumed
    /// validated.
    pub fn predict(&self, state: &DVector<f64>, bundle: &MeasurementBundle) -> Result<DVector<f64>, UkfError> {
        let pos = self.positions(state)?;
        let mut out = DVector::zeros(bundle.len());
        for (slot, a) in bundle.angles.iter().enumerate() {
            let (i, j) = self.bars[a.bar];
            let axis = pos[j] - pos[i];
            if axis.norm() < 1e-12 {
                let member = self.model.bar_of(i).map_or(0, |(m, _)| m);
                return Err(GeometryError::DegenerateMember { member, length: axis.norm() }.into());
            }
            let (pitch, roll) = bar_angles(&axis);
            out[slot] = match a.kind {
                AngleKind::Pitch => pitch,
                AngleKind::Roll => roll,
            };
        }
        let sensors = if bundle.ranges.is_empty() { Vec::new() } else { self.sensor_positions(state)? };
        let locate = |end: RangeEnd| match end {
            RangeEnd::Anchor(id) => self.anchors[&id],
            RangeEnd::Node(k) => sensors[k],
        };
        for (slot, r) in bundle.ranges.iter().enumerate() {
            out[bundle.angles.len() + slot] = (locate(r.a) - locate(r.b)).norm();
        }
        Ok(out)
    }

    /// Bar angles an ideal gravity-referenced IMU reports at `state`; roll is
    /// omitted for bars steeper than the gimbal limit.
    pub fn imu_angles(&self, state: &DVector<f64>, gimbal_limit_deg: f64) -> Result<Vec<AngleObservation>, UkfError> {
        let pos = self.positions(state)?;
        let limit = gimbal_limit_deg.to_radians();
        let mut out = Vec::with_capacity(2 * self.bars.len());
        for (bar, &(i, j)) in self.bars.iter().enumerate() {
            let (pitch, roll) = bar_angles(&(pos[j] - pos[i]));
            out.push(AngleObservation { bar, kind: AngleKind::Pitch, angle: pitch });
            if pitch.abs() <= limit {
                out.push(AngleObservation { bar, kind: AngleKind::Roll, angle: roll });
            }
        }
        Ok(out)
    }

    /// Measurement update of `prior` with `bundle`.
    pub fn update(&self, prior: &Belief, bundle: &MeasurementBundle, params: &UkfParams) -> Result<UpdateOutcome, UkfError> {
        self.validate(bundle)?;
        update(prior, &bundle.values(), &bundle.noise(params), &bundle.angular_mask(), params, |x| {
            self.predict(x, bundle)
        })
    }
}

/// Starting belief from anchor ranges: end caps with at least four anchor
/// ranges are multilaterated, then the nominal shape is fitted to them.
pub fn initial_belief(
    bundle: &MeasurementBundle,
    measurement: &MeasurementModel,
    variance: f64,
) -> Result<Belief, UkfError> {
    measurement.validate(bundle)?;
    let model = measurement.model();
    let n = model.node_count();
    let mut per_node: BTreeMap<usize, BTreeMap<ModuleId, Vec<f64>>> = BTreeMap::new();
    for r in &bundle.ranges {
        if let (RangeEnd::Anchor(a), RangeEnd::Node(k)) | (RangeEnd::Node(k), RangeEnd::Anchor(a)) = (r.a, r.b) {
            per_node.entry(k).or_default().entry(a).or_default().push(r.range);
        }
    }
    let reference = model.reference_nodes().positions;
    let mut from = Vec::new();
    let mut to = Vec::new();
    for (&k, by_anchor) in &per_node {
        if by_anchor.len() < 4 {
            continue;
        }
        let centres: Vec<Vector3<f64>> = by_anchor.keys().map(|a| measurement.anchors()[a]).collect();
        let ranges: Vec<f64> = by_anchor.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
        let Some(guess) = linear_multilateration(&centres, &ranges) else { continue };
        to.push(multilaterate(&centres, &ranges, guess, 30));
        from.push(sensor_position(model, &reference, k, measurement.mount_offset())?);
    }
    if from.len() < 3 {
        return Err(UkfError::Initialization(format!(
            "{} end caps have four anchor ranges, need 3",
            from.len()
        )));
    }
    let (rotation, translation) = fit_rigid(&from, &to);
    let mut mean = DVector::zeros(6 * n);
    for (i, p) in reference.iter().enumerate() {
        let q = rotation * p + translation;
        mean.fixed_rows_mut::<3>(3 * i).copy_from(&q);
    }
    Ok(Belief::isotropic(mean, variance))
}

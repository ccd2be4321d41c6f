//! Spring-mass-net dynamics: force densities, unilateral cables, penalty
//! ground contact with regularized Coulomb friction, gravity, and fixed-step
//! RK4 integration of single states and batches of states.

use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::structure::{
    validate_model, GeometryError, Member, MemberKind, ModelError, NodeSet, TensegrityModel,
    GEOMETRY_EPSILON,
};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("state diverged (non-finite values){}", block_suffix(.block))]
    Divergence { block: Option<usize> },
    #[error("expected {expected} rest-length commands, got {actual}")]
    CommandCount { expected: usize, actual: usize },
    #[error("rest-length command {index} = {value} must be positive")]
    InvalidCommand { index: usize, value: f64 },
    #[error("expected {expected} values, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("invalid dynamics parameter `{0}`")]
    InvalidParameter(&'static str),
    #[error("{0}")]
    InvalidModel(String),
}

fn block_suffix(block: &Option<usize>) -> String {
    block.map(|b| format!(" in block {b}")).unwrap_or_default()
}

/// Flat ground at height `height`, penalty normal force and regularized
/// Coulomb friction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundModel {
    /// m
    pub height: f64,
    pub friction: f64,
    /// N/m
    pub stiffness: f64,
    /// N s/m
    pub damping: f64,
    /// Slip speed below which friction grows linearly (m/s).
    pub slip_velocity: f64,
    /// Upper bound on the slope of the friction law (N s/m). Deep contacts
    /// widen the linear region instead of stiffening it so explicit RK4 at
    /// the configured step stays stable.
    pub max_slip_damping: f64,
}

impl Default for GroundModel {
    fn default() -> Self {
        Self {
            height: 0.0,
            friction: 0.8,
            stiffness: 5.0e4,
            damping: 300.0,
            slip_velocity: 0.05,
            max_slip_damping: 1500.0,
        }
    }
}

impl GroundModel {
    fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.friction >= 0.0) {
            return Err(DynamicsError::InvalidParameter("ground.friction"));
        }
        if !(self.stiffness > 0.0) {
            return Err(DynamicsError::InvalidParameter("ground.stiffness"));
        }
        if !(self.damping >= 0.0) {
            return Err(DynamicsError::InvalidParameter("ground.damping"));
        }
        if !(self.slip_velocity > 0.0) || !(self.max_slip_damping > 0.0) {
            return Err(DynamicsError::InvalidParameter("ground.slip_velocity"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsParams {
    /// Integrator step (s).
    pub dt: f64,
    /// Magnitude of gravity along -z; zero disables it.
    pub gravity: f64,
    pub ground: Option<GroundModel>,
    /// Rate limit on actuated rest lengths (m/s).
    pub max_spool_rate: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self { dt: 1e-3, gravity: GRAVITY, ground: Some(GroundModel::default()), max_spool_rate: 0.5 }
    }
}

/// Force densities `q`, one per member (N/m). Positive means tension.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceDensities(pub Vec<f64>);

/// Force density of one member: `K (1 - L0/L) + (c/L) dL/dt`. Cables carry
/// no compression: when the total tension `K (L - L0) + c dL/dt` would be
/// negative the density is zero.
#[inline]
pub fn force_density(member: &Member, length: f64, rate: f64, rest_length: f64) -> f64 {
    let tension = member.stiffness * (length - rest_length) + member.damping * rate;
    if member.kind == MemberKind::Cable && tension < 0.0 {
        0.0
    } else {
        tension / length
    }
}

pub fn force_densities(
    model: &TensegrityModel,
    lengths: &[f64],
    rates: &[f64],
    rest_lengths: &[f64],
) -> Result<ForceDensities, DynamicsError> {
    let m = model.member_count();
    for len in [lengths.len(), rates.len(), rest_lengths.len()] {
        if len != m {
            return Err(DynamicsError::Dimension { expected: m, actual: len });
        }
    }
    let mut q = Vec::with_capacity(m);
    for (k, member) in model.members().iter().enumerate() {
        if !(lengths[k] > GEOMETRY_EPSILON) {
            return Err(GeometryError::DegenerateMember { member: k, length: lengths[k] }.into());
        }
        if !(rest_lengths[k] > 0.0) {
            return Err(DynamicsError::InvalidCommand { index: k, value: rest_lengths[k] });
        }
        q.push(force_density(member, lengths[k], rates[k], rest_lengths[k]));
    }
    Ok(ForceDensities(q))
}

/// Nodal forces from member force densities, `-C^T diag(q) C N`, assembled as
/// `-C^T U^q` with `U^q_k = q_k U_k`. The leading minus makes positive
/// densities pull the member's end nodes together.
pub fn member_nodal_forces(
    model: &TensegrityModel,
    q: &ForceDensities,
    u: &[Vector3<f64>],
) -> Result<Vec<Vector3<f64>>, DynamicsError> {
    let m = model.member_count();
    if q.0.len() != m || u.len() != m {
        return Err(DynamicsError::Dimension { expected: m, actual: q.0.len().min(u.len()) });
    }
    let mut f = vec![Vector3::zeros(); model.node_count()];
    for (k, &(i, j)) in model.endpoints().iter().enumerate() {
        let uq = u[k] * q.0[k];
        f[i] -= uq;
        f[j] += uq;
    }
    Ok(f)
}

/// Contact force on one node.
#[inline]
pub fn ground_force(position: &Vector3<f64>, velocity: &Vector3<f64>, ground: &GroundModel) -> Vector3<f64> {
    let penetration = ground.height - position.z;
    if penetration <= 0.0 {
        return Vector3::zeros();
    }
    let normal = (ground.stiffness * penetration - ground.damping * velocity.z).max(0.0);
    if normal == 0.0 {
        return Vector3::zeros();
    }
    let (vx, vy) = (velocity.x, velocity.y);
    let speed = (vx * vx + vy * vy).sqrt();
    let limit = ground.friction * normal;
    let mut force = Vector3::new(0.0, 0.0, normal);
    if speed > 0.0 && limit > 0.0 {
        let eps = ground.slip_velocity.max(limit / ground.max_slip_damping);
        let magnitude = limit * (speed / eps).min(1.0);
        force.x = -magnitude * vx / speed;
        force.y = -magnitude * vy / speed;
    }
    force
}

pub fn ground_forces(
    positions: &[Vector3<f64>],
    velocities: &[Vector3<f64>],
    ground: &GroundModel,
) -> Vec<Vector3<f64>> {
    positions.iter().zip(velocities).map(|(p, v)| ground_force(p, v, ground)).collect()
}

/// `M^-1 (F_m + F_g) - G` with `G = (0, 0, gravity)` on every row.
pub fn accelerations(
    model: &TensegrityModel,
    member_forces: &[Vector3<f64>],
    ground_forces: &[Vector3<f64>],
    gravity: f64,
) -> Vec<Vector3<f64>> {
    let g = Vector3::new(0.0, 0.0, gravity);
    model
        .node_masses()
        .iter()
        .zip(member_forces.iter().zip(ground_forces))
        .map(|(&mass, (fm, fg))| (fm + fg) / mass - g)
        .collect()
}

/// Stacked nodal positions then velocities, `y = [N; dN/dt]` in `R^{6n}`
/// with node-major `(x, y, z)` ordering inside each half.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub DVector<f64>);

impl StateVector {
    pub fn from_nodes(nodes: &NodeSet) -> Self {
        let n = nodes.len();
        let mut y = DVector::zeros(6 * n);
        for (i, p) in nodes.positions.iter().enumerate() {
            y.fixed_rows_mut::<3>(3 * i).copy_from(p);
        }
        if let Some(vel) = &nodes.velocities {
            for (i, v) in vel.iter().enumerate() {
                y.fixed_rows_mut::<3>(3 * (n + i)).copy_from(v);
            }
        }
        Self(y)
    }

    pub fn node_count(&self) -> usize {
        self.0.len() / 6
    }

    pub fn position(&self, node: usize) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3 * node).into_owned()
    }

    pub fn velocity(&self, node: usize) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3 * (self.node_count() + node)).into_owned()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        (0..self.node_count()).map(|i| self.position(i)).collect()
    }

    pub fn velocities(&self) -> Vec<Vector3<f64>> {
        (0..self.node_count()).map(|i| self.velocity(i)).collect()
    }

    pub fn to_nodes(&self) -> NodeSet {
        NodeSet::with_velocities(self.positions(), self.velocities())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// `l` states side by side: positions and velocities as `n x 3l` matrices,
/// block `b` occupying columns `3b..3b+3`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchState {
    pub positions: DMatrix<f64>,
    pub velocities: DMatrix<f64>,
}

impl BatchState {
    pub fn from_states(states: &[StateVector]) -> Self {
        let n = states.first().map_or(0, |s| s.node_count());
        let l = states.len();
        let mut positions = DMatrix::zeros(n, 3 * l);
        let mut velocities = DMatrix::zeros(n, 3 * l);
        for (b, s) in states.iter().enumerate() {
            for i in 0..n {
                for c in 0..3 {
                    positions[(i, 3 * b + c)] = s.0[3 * i + c];
                    velocities[(i, 3 * b + c)] = s.0[3 * (n + i) + c];
                }
            }
        }
        Self { positions, velocities }
    }

    pub fn len(&self) -> usize {
        self.positions.ncols() / 3
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block(&self, b: usize) -> StateVector {
        let n = self.positions.nrows();
        let mut y = DVector::zeros(6 * n);
        for i in 0..n {
            for c in 0..3 {
                y[3 * i + c] = self.positions[(i, 3 * b + c)];
                y[3 * (n + i) + c] = self.velocities[(i, 3 * b + c)];
            }
        }
        StateVector(y)
    }

    pub fn to_states(&self) -> Vec<StateVector> {
        (0..self.len()).map(|b| self.block(b)).collect()
    }
}

/// Moves actuated rest lengths toward their targets no faster than the
/// spool rate.
#[derive(Debug, Clone)]
pub struct SpoolLimiter {
    current: Vec<f64>,
    max_rate: f64,
}

impl SpoolLimiter {
    pub fn new(initial: Vec<f64>, max_rate: f64) -> Self {
        Self { current: initial, max_rate }
    }

    pub fn current(&self) -> &[f64] {
        &self.current
    }

    pub fn advance(&mut self, target: &[f64], dt: f64) -> &[f64] {
        let max_step = self.max_rate * dt;
        for (c, &t) in self.current.iter_mut().zip(target) {
            *c += (t - *c).clamp(-max_step, max_step);
        }
        &self.current
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    pub kinetic: f64,
    pub elastic: f64,
    pub gravitational: f64,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.kinetic + self.elastic + self.gravitational
    }
}

struct Scratch {
    k: [Vec<Vector3<f64>>; 8],
    tmp_pos: Vec<Vector3<f64>>,
    tmp_vel: Vec<Vector3<f64>>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        let z = vec![Vector3::zeros(); n];
        Self {
            k: std::array::from_fn(|_| z.clone()),
            tmp_pos: z.clone(),
            tmp_vel: z,
        }
    }
}

/// A validated model paired with integrator and environment parameters.
#[derive(Debug, Clone)]
pub struct Dynamics {
    model: TensegrityModel,
    params: DynamicsParams,
}

impl Dynamics {
    pub fn new(model: TensegrityModel, params: DynamicsParams) -> Result<Self, DynamicsError> {
        let violations = validate_model(&model);
        if !violations.is_empty() {
            return Err(DynamicsError::InvalidModel(ModelError::Invalid(violations).to_string()));
        }
        if !(params.dt > 0.0) {
            return Err(DynamicsError::InvalidParameter("dt"));
        }
        if !(params.max_spool_rate > 0.0) {
            return Err(DynamicsError::InvalidParameter("max_spool_rate"));
        }
        if let Some(g) = &params.ground {
            g.validate()?;
        }
        Ok(Self { model, params })
    }

    pub fn model(&self) -> &TensegrityModel {
        &self.model
    }

    pub fn params(&self) -> &DynamicsParams {
        &self.params
    }

    /// Nominal actuated rest lengths, in `actuated_indices` order.
    pub fn nominal_commands(&self) -> Vec<f64> {
        self.model.actuated_indices().iter().map(|&k| self.model.members()[k].rest_length).collect()
    }

    /// Full rest-length vector with the actuated members replaced by
    /// `commands`.
    pub fn rest_lengths(&self, commands: &[f64]) -> Result<Vec<f64>, DynamicsError> {
        let act = self.model.actuated_indices();
        if commands.len() != act.len() {
            return Err(DynamicsError::CommandCount { expected: act.len(), actual: commands.len() });
        }
        let mut rest = self.model.rest_lengths();
        for (idx, (&k, &c)) in act.iter().zip(commands).enumerate() {
            if !(c > 0.0) {
                return Err(DynamicsError::InvalidCommand { index: idx, value: c });
            }
            rest[k] = c;
        }
        Ok(rest)
    }

    fn acceleration_into(
        &self,
        pos: &[Vector3<f64>],
        vel: &[Vector3<f64>],
        rest: &[f64],
        out: &mut [Vector3<f64>],
    ) -> Result<(), DynamicsError> {
        for a in out.iter_mut() {
            *a = Vector3::zeros();
        }
        for (k, (&(i, j), member)) in
            self.model.endpoints().iter().zip(self.model.members()).enumerate()
        {
            let u = pos[i] - pos[j];
            let length = u.norm();
            if !length.is_finite() {
                return Err(DynamicsError::Divergence { block: None });
            }
            if !(length > GEOMETRY_EPSILON) {
                return Err(GeometryError::DegenerateMember { member: k, length }.into());
            }
            let rate = u.dot(&(vel[i] - vel[j])) / length;
            let uq = u * force_density(member, length, rate, rest[k]);
            out[i] -= uq;
            out[j] += uq;
        }
        let g = Vector3::new(0.0, 0.0, self.params.gravity);
        for (i, (a, &mass)) in out.iter_mut().zip(self.model.node_masses()).enumerate() {
            if let Some(ground) = &self.params.ground {
                *a += ground_force(&pos[i], &vel[i], ground);
            }
            *a = *a / mass - g;
        }
        Ok(())
    }

    /// Nodal accelerations of a state under the given full rest lengths.
    pub fn state_accelerations(
        &self,
        state: &StateVector,
        rest: &[f64],
    ) -> Result<Vec<Vector3<f64>>, DynamicsError> {
        let n = self.model.node_count();
        let mut out = vec![Vector3::zeros(); n];
        self.acceleration_into(&state.positions(), &state.velocities(), rest, &mut out)?;
        Ok(out)
    }

    fn rk4(
        &self,
        pos: &mut [Vector3<f64>],
        vel: &mut [Vector3<f64>],
        rest: &[f64],
        h: f64,
        s: &mut Scratch,
    ) -> Result<(), DynamicsError> {
        let n = pos.len();
        let [k1x, k1v, k2x, k2v, k3x, k3v, k4x, k4v] = &mut s.k;
        k1x.copy_from_slice(vel);
        self.acceleration_into(pos, vel, rest, k1v)?;

        for i in 0..n {
            s.tmp_pos[i] = pos[i] + k1x[i] * (0.5 * h);
            s.tmp_vel[i] = vel[i] + k1v[i] * (0.5 * h);
        }
        k2x.copy_from_slice(&s.tmp_vel);
        self.acceleration_into(&s.tmp_pos, &s.tmp_vel, rest, k2v)?;

        for i in 0..n {
            s.tmp_pos[i] = pos[i] + k2x[i] * (0.5 * h);
            s.tmp_vel[i] = vel[i] + k2v[i] * (0.5 * h);
        }
        k3x.copy_from_slice(&s.tmp_vel);
        self.acceleration_into(&s.tmp_pos, &s.tmp_vel, rest, k3v)?;

        for i in 0..n {
            s.tmp_pos[i] = pos[i] + k3x[i] * h;
            s.tmp_vel[i] = vel[i] + k3v[i] * h;
        }
        k4x.copy_from_slice(&s.tmp_vel);
        self.acceleration_into(&s.tmp_pos, &s.tmp_vel, rest, k4v)?;

        let w = h / 6.0;
        for i in 0..n {
            pos[i] += (k1x[i] + (k2x[i] + k3x[i]) * 2.0 + k4x[i]) * w;
            vel[i] += (k1v[i] + (k2v[i] + k3v[i]) * 2.0 + k4v[i]) * w;
        }
        if pos.iter().chain(vel.iter()).any(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(DynamicsError::Divergence { block: None });
        }
        Ok(())
    }

    fn check_state(&self, state: &StateVector) -> Result<(), DynamicsError> {
        let expected = 6 * self.model.node_count();
        if state.0.len() != expected {
            return Err(DynamicsError::Dimension { expected, actual: state.0.len() });
        }
        Ok(())
    }

    /// One RK4 step of length `dt` with actuated rest lengths held at
    /// `commands`.
    pub fn step(
        &self,
        state: &StateVector,
        commands: &[f64],
        dt: f64,
    ) -> Result<StateVector, DynamicsError> {
        self.check_state(state)?;
        if !(dt > 0.0) {
            return Err(DynamicsError::InvalidParameter("dt"));
        }
        let rest = self.rest_lengths(commands)?;
        let mut pos = state.positions();
        let mut vel = state.velocities();
        let mut scratch = Scratch::new(pos.len());
        self.rk4(&mut pos, &mut vel, &rest, dt, &mut scratch)?;
        Ok(StateVector::from_nodes(&NodeSet::with_velocities(pos, vel)))
    }

    /// [`Dynamics::step`] applied to every block of `batch`. Blocks are
    /// independent and evaluated in parallel; each block's result is exactly
    /// what `step` returns for it.
    pub fn step_batch(
        &self,
        batch: &BatchState,
        commands: &[f64],
        dt: f64,
    ) -> Result<BatchState, DynamicsError> {
        let states = batch.to_states();
        let stepped: Result<Vec<_>, _> = states
            .par_iter()
            .enumerate()
            .map(|(b, s)| {
                self.step(s, commands, dt).map_err(|e| match e {
                    DynamicsError::Divergence { .. } => DynamicsError::Divergence { block: Some(b) },
                    other => other,
                })
            })
            .collect();
        Ok(BatchState::from_states(&stepped?))
    }

    /// Integrates `duration` seconds in steps of `params.dt` (the last one
    /// shortened to land exactly on `duration`), interpolating actuated rest
    /// lengths linearly from `from` to `to`.
    pub fn propagate(
        &self,
        state: &StateVector,
        from: &[f64],
        to: &[f64],
        duration: f64,
    ) -> Result<StateVector, DynamicsError> {
        self.check_state(state)?;
        let rest_from = self.rest_lengths(from)?;
        let rest_to = self.rest_lengths(to)?;
        let mut pos = state.positions();
        let mut vel = state.velocities();
        let mut scratch = Scratch::new(pos.len());
        let mut rest = rest_from.clone();
        let steps = (duration / self.params.dt).ceil().max(0.0) as usize;
        let mut t = 0.0;
        for s in 0..steps {
            let h = (duration - t).min(self.params.dt);
            if h <= 0.0 {
                break;
            }
            let frac = if duration > 0.0 { (t + 0.5 * h) / duration } else { 1.0 };
            for (r, (a, b)) in rest.iter_mut().zip(rest_from.iter().zip(&rest_to)) {
                *r = a + (b - a) * frac;
            }
            self.rk4(&mut pos, &mut vel, &rest, h, &mut scratch)?;
            t = (s + 1) as f64 * self.params.dt;
        }
        Ok(StateVector::from_nodes(&NodeSet::with_velocities(pos, vel)))
    }

    /// [`Dynamics::propagate`] over many states; a diverging state is named by
    /// its index.
    pub fn propagate_batch(
        &self,
        states: &[StateVector],
        from: &[f64],
        to: &[f64],
        duration: f64,
    ) -> Result<Vec<StateVector>, DynamicsError> {
        states
            .par_iter()
            .enumerate()
            .map(|(b, s)| {
                self.propagate(s, from, to, duration).map_err(|e| match e {
                    DynamicsError::Divergence { .. } => DynamicsError::Divergence { block: Some(b) },
                    other => other,
                })
            })
            .collect()
    }

    /// Member tensions `q_k L_k` (N) at a state.
    pub fn tensions(&self, state: &StateVector, rest: &[f64]) -> Vec<f64> {
        let pos = state.positions();
        let vel = state.velocities();
        self.model
            .endpoints()
            .iter()
            .zip(self.model.members())
            .enumerate()
            .map(|(k, (&(i, j), member))| {
                let u = pos[i] - pos[j];
                let length = u.norm();
                let rate = u.dot(&(vel[i] - vel[j])) / length;
                force_density(member, length, rate, rest[k]) * length
            })
            .collect()
    }

    /// Kinetic, elastic (slack cables store nothing) and gravitational energy.
    /// Ground contact energy is not included.
    pub fn energy(&self, state: &StateVector, rest: &[f64]) -> Energy {
        let pos = state.positions();
        let vel = state.velocities();
        let masses = self.model.node_masses();
        let kinetic = vel.iter().zip(masses).map(|(v, m)| 0.5 * m * v.norm_squared()).sum();
        let elastic = self
            .model
            .endpoints()
            .iter()
            .zip(self.model.members())
            .enumerate()
            .map(|(k, (&(i, j), member))| {
                let stretch = (pos[i] - pos[j]).norm() - rest[k];
                if member.kind == MemberKind::Cable && stretch < 0.0 {
                    0.0
                } else {
                    0.5 * member.stiffness * stretch * stretch
                }
            })
            .sum();
        let gravitational =
            pos.iter().zip(masses).map(|(p, m)| m * self.params.gravity * p.z).sum();
        Energy { kinetic, elastic, gravitational }
    }

    pub fn momentum(&self, state: &StateVector) -> Vector3<f64> {
        state.velocities().iter().zip(self.model.node_masses()).map(|(v, m)| v * *m).sum()
    }

    /// Runs the model forward with nominal rest lengths until every node
    /// moves slower than `tolerance` or `max_time` elapses.
    pub fn settle(
        &self,
        state: &StateVector,
        tolerance: f64,
        max_time: f64,
    ) -> Result<StateVector, DynamicsError> {
        let commands = self.nominal_commands();
        let rest = self.rest_lengths(&commands)?;
        let mut pos = state.positions();
        let mut vel = state.velocities();
        let mut scratch = Scratch::new(pos.len());
        let steps = (max_time / self.params.dt).ceil() as usize;
        for s in 0..steps {
            self.rk4(&mut pos, &mut vel, &rest, self.params.dt, &mut scratch)?;
            if s % 100 == 99 && vel.iter().all(|v| v.norm() < tolerance) {
                break;
            }
        }
        Ok(StateVector::from_nodes(&NodeSet::with_velocities(pos, vel)))
    }
}

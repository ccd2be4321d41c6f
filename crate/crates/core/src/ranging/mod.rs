//! Simulated UWB ranging between modules with free-running clocks.
//!
//! Each exchange produces the six timestamps of a poll/response/final
//! sequence; the responder turns them into a time of flight with the
//! double-sided estimator `1/2 (c - d b / a)`, which cancels first-order
//! clock skew between the two modules.

mod broadcast;
mod clock;
mod gate;
mod log;
mod twr;

pub use broadcast::{broadcast_round, packets_per_round, BroadcastRound, Module, ModuleRole, RoundConfig};
pub use clock::{local_timestamp, ClockModel};
pub use gate::{nlos_gate, GateDecision, NlosModel, PathSample};
pub use log::{read_log, write_log, LogRecord};
pub use twr::{
    distance_estimate, single_sided_tof, tof_estimate, twr_exchange, Channel, TimestampSet,
    TwrDelays, TwrExchange,
};

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::structure::{GeometryError, TensegrityModel, GEOMETRY_EPSILON};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub type ModuleId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RangingError {
    #[error("exchange {initiator} -> {responder} lost")]
    MissingExchange { initiator: ModuleId, responder: ModuleId },
    #[error("malformed exchange {initiator} -> {responder}: initiator round time {round:e} s")]
    MalformedExchange { initiator: ModuleId, responder: ModuleId, round: f64 },
    #[error("duplicate module id {0} in broadcast schedule")]
    SlotCollision(ModuleId),
    #[error("invalid ranging parameter `{0}`")]
    InvalidParameter(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("log {path}: {message}")]
    Log { path: String, message: String },
}

/// One distance measurement, computed by `responder` from an exchange it
/// had with `initiator`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangingMeasurement {
    /// Wall-clock time the measurement is attributed to (s).
    pub time: f64,
    pub initiator: ModuleId,
    pub responder: ModuleId,
    /// Uncorrected distance `m_{j,i}` (m).
    pub raw: f64,
    /// `raw - o_{j,i}` (m).
    pub corrected: f64,
    pub accepted: bool,
    /// Simulated first-path power estimate (dB); low values flag reflected
    /// paths.
    pub signal_power: f64,
}

impl RangingMeasurement {
    /// The module that computed (and reported) the distance.
    pub fn computed_by(&self) -> ModuleId {
        self.responder
    }
}

/// Symmetric per-pair distance offsets `o_{i,j} = o_{j,i}` (m).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<OffsetEntry>", into = "Vec<OffsetEntry>")]
pub struct OffsetTable {
    entries: BTreeMap<(ModuleId, ModuleId), f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OffsetEntry {
    pub i: ModuleId,
    pub j: ModuleId,
    pub offset: f64,
}

impl From<Vec<OffsetEntry>> for OffsetTable {
    fn from(v: Vec<OffsetEntry>) -> Self {
        let mut t = OffsetTable::default();
        for e in v {
            t.set(e.i, e.j, e.offset);
        }
        t
    }
}

impl From<OffsetTable> for Vec<OffsetEntry> {
    fn from(t: OffsetTable) -> Self {
        t.entries.into_iter().map(|((i, j), offset)| OffsetEntry { i, j, offset }).collect()
    }
}

impl OffsetTable {
    fn key(i: ModuleId, j: ModuleId) -> (ModuleId, ModuleId) {
        (i.min(j), i.max(j))
    }

    /// Sets `o_{i,j}`; the diagonal is ignored.
    pub fn set(&mut self, i: ModuleId, j: ModuleId, offset: f64) {
        if i != j {
            self.entries.insert(Self::key(i, j), offset);
        }
    }

    pub fn get(&self, i: ModuleId, j: ModuleId) -> Option<f64> {
        self.entries.get(&Self::key(i, j)).copied()
    }

    /// Missing pairs read as zero.
    pub fn get_or_zero(&self, i: ModuleId, j: ModuleId) -> f64 {
        self.get(i, j).unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ModuleId, ModuleId, f64)> + '_ {
        self.entries.iter().map(|(&(i, j), &o)| (i, j, o))
    }

    pub fn mean(&self) -> f64 {
        if self.entries.is_empty() {
            0.0
        } else {
            self.entries.values().sum::<f64>() / self.entries.len() as f64
        }
    }

    /// Same pairs, every offset replaced by `value`.
    pub fn with_constant(&self, value: f64) -> Self {
        Self { entries: self.entries.keys().map(|&k| (k, value)).collect() }
    }

    pub fn merge(&mut self, other: &OffsetTable) {
        for (i, j, o) in other.iter() {
            self.set(i, j, o);
        }
    }
}

/// Position of the ranging module mounted on end cap `node`: displaced
/// `mount_offset` metres along its bar toward the bar's other end.
pub fn sensor_position(
    model: &TensegrityModel,
    positions: &[Vector3<f64>],
    node: usize,
    mount_offset: f64,
) -> Result<Vector3<f64>, GeometryError> {
    let (member, other) = model.bar_of(node).ok_or(GeometryError::NotABarEnd { node })?;
    let axis = positions[other] - positions[node];
    let length = axis.norm();
    if length < GEOMETRY_EPSILON {
        return Err(GeometryError::DegenerateMember { member, length });
    }
    Ok(positions[node] + axis * (mount_offset / length))
}

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::RangingMeasurement;

/// Reflected-path corruption and the first-path power score attached to
/// every packet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NlosModel {
    /// Probability that a packet travels a reflected path.
    pub probability: f64,
    /// Mean of the exponential positive range bias on reflected paths (m).
    pub bias_mean: f64,
    /// dB
    pub los_power_mean: f64,
    /// dB
    pub nlos_power_mean: f64,
    /// dB
    pub power_sigma: f64,
    /// Packets scoring below this are rejected (dB).
    pub threshold: f64,
}

impl Default for NlosModel {
    fn default() -> Self {
        Self {
            probability: 0.0,
            bias_mean: 0.5,
            los_power_mean: -2.0,
            nlos_power_mean: -12.0,
            power_sigma: 1.0,
            threshold: -6.0,
        }
    }
}

/// Path outcome for one packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    /// m, zero on line-of-sight packets.
    pub bias: f64,
    pub signal_power: f64,
    pub reflected: bool,
}

impl NlosModel {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> PathSample {
        let reflected = self.probability > 0.0 && rng.random::<f64>() < self.probability;
        let bias = if reflected && self.bias_mean > 0.0 {
            Exp::new(1.0 / self.bias_mean).expect("positive rate").sample(rng)
        } else {
            0.0
        };
        let mean = if reflected { self.nlos_power_mean } else { self.los_power_mean };
        let signal_power = if self.power_sigma > 0.0 {
            Normal::new(mean, self.power_sigma).expect("finite sigma").sample(rng)
        } else {
            mean
        };
        PathSample { bias, signal_power, reflected }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateDecision {
    Accepted,
    Rejected,
}

impl GateDecision {
    pub fn is_accepted(self) -> bool {
        self == GateDecision::Accepted
    }
}

/// Accepts a measurement when its power score clears the threshold and its
/// raw distance is positive.
pub fn nlos_gate(measurement: &RangingMeasurement, model: &NlosModel) -> GateDecision {
    if measurement.signal_power >= model.threshold && measurement.raw > 0.0 {
        GateDecision::Accepted
    } else {
        GateDecision::Rejected
    }
}

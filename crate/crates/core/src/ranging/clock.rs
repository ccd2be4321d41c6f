use serde::{Deserialize, Serialize};

/// A free-running module clock: `local = quantize(offset + (1 + skew) t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockModel {
    /// s
    pub offset: f64,
    /// Dimensionless rate error; 20 ppm is `20e-6`.
    pub skew: f64,
    /// Timestamp resolution (s); zero disables quantization.
    pub quantum: f64,
}

impl ClockModel {
    pub const IDEAL: ClockModel = ClockModel { offset: 0.0, skew: 0.0, quantum: 0.0 };

    /// One tick of a 63.8976 GHz timestamp counter.
    pub const DEFAULT_QUANTUM: f64 = 15.65e-12;

    pub fn is_valid(&self) -> bool {
        self.quantum >= 0.0 && self.skew.abs() < 1e-3 && self.offset.is_finite()
    }

    /// Unquantized local reading at true time `t`.
    pub fn read_exact(&self, t: f64) -> f64 {
        self.offset + (1.0 + self.skew) * t
    }

    pub fn quantize(&self, local: f64) -> f64 {
        if self.quantum > 0.0 {
            (local / self.quantum).round() * self.quantum
        } else {
            local
        }
    }
}

/// Reading of `clock` at true time `t`.
pub fn local_timestamp(clock: &ClockModel, t: f64) -> f64 {
    clock.quantize(clock.read_exact(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_clock() {
        assert_eq!(local_timestamp(&ClockModel::IDEAL, 1.0), 1.0);
    }

    #[test]
    fn offset_and_skew() {
        let c = ClockModel { offset: 5.0, skew: 1e-5, quantum: 0.0 };
        assert_relative_eq!(local_timestamp(&c, 100.0), 105.001, epsilon = 1e-12);
    }

    #[test]
    fn quantized_to_ticks() {
        let c = ClockModel { offset: 0.0, skew: 3e-6, quantum: ClockModel::DEFAULT_QUANTUM };
        for t in [1e-6, 0.123456789, 3.5, 17.0] {
            let ticks = local_timestamp(&c, t) / c.quantum;
            assert!((ticks - ticks.round()).abs() < 1e-3, "{ticks}");
        }
    }

    #[test]
    fn validity() {
        assert!(ClockModel::IDEAL.is_valid());
        assert!(!ClockModel { skew: 2e-3, ..ClockModel::IDEAL }.is_valid());
        assert!(!ClockModel { quantum: -1.0, ..ClockModel::IDEAL }.is_valid());
    }
}

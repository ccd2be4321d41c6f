use serde::{Deserialize, Serialize};

use super::HarnessError;

/// From `time` on, the listed actuated cables are commanded to `scale`
/// times their nominal rest length and all others to nominal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub time: f64,
    pub cables: Vec<usize>,
    pub scale: f64,
}

/// Rest-length targets over time. Cable indices refer to the model's
/// actuated members in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActuationScript {
    Hold,
    /// Cable `k` of `cables` follows
    /// `1 - amplitude (1 - cos(2π t / period + k phase_step)) / 2` times
    /// nominal, sampled every `step` seconds and held in between.
    Sinusoid {
        cables: Vec<usize>,
        amplitude: f64,
        period: f64,
        phase_step: f64,
        step: f64,
        start: f64,
    },
    Keyframes {
        frames: Vec<Keyframe>,
    },
}

impl ActuationScript {
    pub fn validate(&self, actuated: usize) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let check_cables = |cables: &[usize]| match cables.iter().find(|&&c| c >= actuated) {
            Some(c) => bad(format!("actuated cable {c} does not exist ({actuated} actuated)")),
            None => Ok(()),
        };
        match self {
            ActuationScript::Hold => Ok(()),
            ActuationScript::Sinusoid { cables, amplitude, period, step, .. } => {
                check_cables(cables)?;
                if !(*amplitude >= 0.0 && *amplitude < 1.0) {
                    return bad(format!("sinusoid amplitude {amplitude} outside [0, 1)"));
                }
                if !(*period > 0.0) || !(*step >= 0.0) {
                    return bad("sinusoid period must be positive and step non-negative".into());
                }
                Ok(())
            }
            ActuationScript::Keyframes { frames } => {
                for w in frames.windows(2) {
                    if !(w[1].time >= w[0].time) {
                        return bad(format!("keyframe at {} precedes {}", w[1].time, w[0].time));
                    }
                }
                for f in frames {
                    check_cables(&f.cables)?;
                    if !(f.scale > 0.0) {
                        return bad(format!("keyframe scale {} must be positive", f.scale));
                    }
                }
                Ok(())
            }
        }
    }

    /// Target rest lengths at time `t`.
    pub fn target(&self, t: f64, nominal: &[f64]) -> Vec<f64> {
        let mut out = nominal.to_vec();
        match self {
            ActuationScript::Hold => {}
            ActuationScript::Sinusoid { cables, amplitude, period, phase_step, step, start } => {
                if t >= *start {
                    let local = t - start;
                    let held = if *step > 0.0 { (local / step).floor() * step } else { local };
                    for (k, &c) in cables.iter().enumerate() {
                        let phase = std::f64::consts::TAU * held / period + k as f64 * phase_step;
                        out[c] *= 1.0 - amplitude * 0.5 * (1.0 - phase.cos());
                    }
                }
            }
            ActuationScript::Keyframes { frames } => {
                if let Some(f) = frames.iter().rev().find(|f| f.time <= t) {
                    for &c in &f.cables {
                        out[c] *= f.scale;
                    }
                }
            }
        }
        out
    }

    /// Cables touched by the script.
    pub fn driven(&self) -> Vec<usize> {
        let mut v: Vec<usize> = match self {
            ActuationScript::Hold => vec![],
            ActuationScript::Sinusoid { cables, .. } => cables.clone(),
            ActuationScript::Keyframes { frames } => frames.iter().flat_map(|f| f.cables.clone()).collect(),
        };
        v.sort_unstable();
        v.dedup();
        v
    }
}

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::actuation::{ActuationScript, Keyframe};
use super::HarnessError;
use crate::calibration::{desk_anchors, HemisphereSide};
use crate::dynamics::DynamicsParams;
use crate::ranging::{Channel, ModuleId, NlosModel};
use crate::structure::SuperballParams;
use crate::ukf::UkfParams;

/// The four estimator variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Setting {
    #[default]
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "no_imu")]
    NoImu,
    #[serde(rename = "full_const_offset")]
    FullConstOffset,
    #[serde(rename = "anchors_4")]
    Anchors4,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::Full, Setting::NoImu, Setting::FullConstOffset, Setting::Anchors4];

    pub fn name(self) -> &'static str {
        match self {
            Setting::Full => "full",
            Setting::NoImu => "no_imu",
            Setting::FullConstOffset => "full_const_offset",
            Setting::Anchors4 => "anchors_4",
        }
    }

    pub fn uses_imu(self) -> bool {
        self != Setting::NoImu
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Setting {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Setting::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown setting `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    #[default]
    Local,
    Global,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Local => "local",
            ScenarioKind::Global => "global",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "local" => Ok(ScenarioKind::Local),
            "global" => Ok(ScenarioKind::Global),
            _ => Err(HarnessError::Config(format!("unknown scenario `{s}`"))),
        }
    }
}

/// Anchor positions (true, in the world frame) and their roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnchorLayout {
    pub positions: Vec<[f64; 3]>,
    /// Id of the first anchor; the rest follow consecutively.
    pub first_id: ModuleId,
    /// Indices whose positions are handed to calibration as priors.
    pub priors: [usize; 3],
    /// Index whose side of the prior plane is known.
    pub hemisphere_anchor: usize,
    pub hemisphere_side: HemisphereSide,
    /// Indices kept by the `anchors_4` setting.
    pub reduced: Vec<usize>,
}

impl Default for AnchorLayout {
    fn default() -> Self {
        Self {
            positions: desk_anchors().iter().map(|p| [p.x, p.y, p.z]).collect(),
            first_id: 0,
            priors: [0, 2, 4],
            hemisphere_anchor: 1,
            hemisphere_side: HemisphereSide::Below,
            reduced: vec![0, 3, 4, 7],
        }
    }
}

impl AnchorLayout {
    pub fn id(&self, index: usize) -> ModuleId {
        self.first_id + index as ModuleId
    }

    pub fn position(&self, index: usize) -> Vector3<f64> {
        Vector3::from(self.positions[index])
    }

    /// Anchor indices active under `setting`.
    pub fn active(&self, setting: Setting) -> Vec<usize> {
        match setting {
            Setting::Anchors4 => self.reduced.clone(),
            _ => (0..self.positions.len()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RangingConfig {
    /// Broadcast rounds per second.
    pub round_rate: f64,
    /// s
    pub slot_spacing: f64,
    pub channel: Channel,
    pub nlos: NlosModel,
    /// True anchor/robot offsets are drawn uniformly from this range (m).
    pub offset_range: (f64, f64),
    /// True robot/robot offsets (m).
    pub internal_offset_range: (f64, f64),
    /// Clock skews are drawn uniformly within ± this (ppm).
    pub clock_skew_ppm: f64,
    /// Id of the module on end cap 0; the rest follow consecutively.
    pub robot_first_id: ModuleId,
}

impl Default for RangingConfig {
    fn default() -> Self {
        Self {
            round_rate: 15.0,
            slot_spacing: 1e-3,
            channel: Channel { timestamp_sigma: 2e-10, loss_probability: 0.02 },
            nlos: NlosModel { probability: 0.3, ..NlosModel::default() },
            offset_range: (0.0, 0.5),
            internal_offset_range: (0.0, 0.3),
            clock_skew_ppm: 20.0,
            robot_first_id: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpuriousSample {
    pub time: f64,
    pub bar: usize,
    /// Added to the bar's pitch reading (rad).
    pub error: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImuConfig {
    /// Angle noise standard deviation (rad); the filter's angle variance
    /// is used when absent.
    pub angle_sigma: Option<f64>,
    pub spurious: Option<SpuriousSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Predict/update rate (Hz); measurements are bundled at the same rate.
    pub rate: f64,
    pub initial_variance: f64,
    /// Delay (s) between taking a range or IMU sample and its arrival at
    /// the estimator.
    pub latency: f64,
    /// Ranges arriving before this time (s) are pooled to place the robot
    /// before the filter starts.
    pub init_window: f64,
    pub ukf: UkfParams,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { rate: 10.0, initial_variance: 0.01, latency: 0.1, init_window: 0.5, ukf: UkfParams { state_noise: 1e-4, velocity_noise: Some(1e-3), ..UkfParams::default() } }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationMode {
    /// Self-calibrate anchors and offsets from a logged calibration session.
    #[default]
    Solve,
    /// Use the true anchors and offsets.
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationPhase {
    pub mode: CalibrationMode,
    /// Static robot poses recorded for calibration.
    pub samples: usize,
}

impl Default for CalibrationPhase {
    fn default() -> Self {
        Self { mode: CalibrationMode::Solve, samples: 400 }
    }
}

/// Where the robot starts: resting on `face` (a cable triangle, the first
/// one when absent) at `(x, y)`, turned `yaw` rad about the vertical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StartPose {
    pub face: Option<[usize; 3]>,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    /// Settling time before the run starts (s).
    pub settle: f64,
}

impl Default for StartPose {
    fn default() -> Self {
        Self { face: None, x: 4.5, y: 4.15, yaw: 0.0, settle: 25.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// Error statistics ignore everything before this time (s).
    pub settle_time: f64,
    /// A new ground triangle must sit this much lower (m) to replace the
    /// current one.
    pub hysteresis: f64,
    /// An estimated face transition matches a true one within this (s).
    pub transition_tolerance: f64,
    /// Post-roll statistics start this long after the first true transition.
    pub roll_margin: f64,
    /// End caps whose estimate lag is reported.
    pub tracked: Vec<usize>,
    /// Largest lag searched (s).
    pub lag_window: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            settle_time: 10.0,
            hysteresis: 0.05,
            transition_tolerance: 1.0,
            roll_margin: 5.0,
            tracked: vec![1, 5],
            lag_window: 1.0,
        }
    }
}

/// Everything a scenario run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub setting: Setting,
    pub seed: u64,
    /// s
    pub duration: f64,
    pub superball: SuperballParams,
    /// Model file replacing the built-in six-strut robot.
    pub model_file: Option<PathBuf>,
    pub dynamics: DynamicsParams,
    /// Distance from each end cap to its ranging module along the bar (m).
    pub mount_offset: f64,
    pub anchors: AnchorLayout,
    pub ranging: RangingConfig,
    pub imu: ImuConfig,
    pub filter: FilterConfig,
    pub calibration: CalibrationPhase,
    pub start: StartPose,
    pub actuation: ActuationScript,
    pub metrics: MetricsConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::local()
    }
}

impl ScenarioConfig {
    /// Two cables driven by phase-shifted stepwise sinusoids while the robot
    /// stays on its base triangle.
    pub fn local() -> Self {
        Self {
            scenario: ScenarioKind::Local,
            setting: Setting::Full,
            seed: 0,
            duration: 60.0,
            superball: SuperballParams::default(),
            model_file: None,
            dynamics: DynamicsParams::default(),
            mount_offset: 0.1,
            anchors: AnchorLayout::default(),
            ranging: RangingConfig::default(),
            imu: ImuConfig::default(),
            filter: FilterConfig::default(),
            calibration: CalibrationPhase::default(),
            start: StartPose::default(),
            actuation: ActuationScript::Sinusoid {
                cables: vec![2, 3],
                amplitude: 0.3,
                period: 8.0,
                phase_step: std::f64::consts::FRAC_PI_2,
                step: 0.5,
                start: 2.0,
            },
            metrics: MetricsConfig::default(),
        }
    }

    /// Two scripted rolls and a spurious IMU sample at 60 s.
    pub fn global() -> Self {
        let frame = |time: f64, cables: Vec<usize>, scale: f64| Keyframe { time, cables, scale };
        Self {
            scenario: ScenarioKind::Global,
            duration: 80.0,
            imu: ImuConfig { spurious: Some(SpuriousSample { time: 60.0, bar: 0, error: 1.0 }), ..ImuConfig::default() },
            actuation: ActuationScript::Keyframes {
                frames: vec![
                    frame(15.0, vec![8], 0.5),
                    frame(20.0, vec![], 1.0),
                    frame(30.0, vec![1, 10], 0.3),
                    frame(36.0, vec![], 1.0),
                ],
            },
            ..Self::local()
        }
    }

    /// Defaults for `kind`.
    pub fn for_kind(kind: ScenarioKind) -> Self {
        match kind {
            ScenarioKind::Local => Self::local(),
            ScenarioKind::Global => Self::global(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |what: &str| Err(HarnessError::Config(what.to_string()));
        if !(self.duration > 0.0) {
            return bad("duration must be positive");
        }
        if !(self.filter.rate > 0.0) || !(self.ranging.round_rate > 0.0) {
            return bad("rates must be positive");
        }
        if !(self.filter.initial_variance > 0.0) {
            return bad("initial_variance must be positive");
        }
        if !(self.filter.latency >= 0.0 && self.filter.latency.is_finite()) {
            return bad("latency must be finite and non-negative");
        }
        let n = self.anchors.positions.len();
        if n < 4 {
            return bad("at least four anchors are required");
        }
        if self.anchors.priors.iter().chain([&self.anchors.hemisphere_anchor]).any(|&i| i >= n)
            || self.anchors.reduced.iter().any(|&i| i >= n)
        {
            return bad("anchor role index out of range");
        }
        if (self.anchors.first_id..self.anchors.first_id + n as ModuleId).contains(&self.ranging.robot_first_id) {
            return bad("robot module ids overlap anchor ids");
        }
        self.filter.ukf.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_toml()?).map_err(|e| HarnessError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn setting_names_round_trip() {
        for s in Setting::ALL {
            assert_eq!(s.name().parse::<Setting>().unwrap(), s);
            let toml = toml::to_string(&ScenarioConfig { setting: s, ..ScenarioConfig::local() }).unwrap();
            assert!(toml.contains(&format!("setting = \"{}\"", s.name())));
        }
        assert!("anchors4".parse::<Setting>().is_err());
    }

    #[test]
    fn config_toml_round_trip() {
        for c in [ScenarioConfig::local(), ScenarioConfig::global()] {
            let back: ScenarioConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
            assert_eq!(back, c);
            c.validate().unwrap();
        }
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c: ScenarioConfig = toml::from_str("seed = 7\nsetting = \"no_imu\"\n[filter]\nrate = 5.0\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.setting, Setting::NoImu);
        assert_eq!(c.filter.rate, 5.0);
        assert_eq!(c.filter.ukf, FilterConfig::default().ukf);
    }

    #[test]
    fn reduced_layout_is_not_coplanar() {
        let a = AnchorLayout::default();
        let pts: Vec<_> = a.active(Setting::Anchors4).into_iter().map(|i| a.position(i)).collect();
        assert_eq!(pts.len(), 4);
        assert!(crate::geometry::spread(&pts)[2] > 0.1);
    }

    #[test]
    fn overlapping_ids_rejected() {
        let mut c = ScenarioConfig::local();
        c.ranging.robot_first_id = 3;
        assert!(c.validate().is_err());
    }
}

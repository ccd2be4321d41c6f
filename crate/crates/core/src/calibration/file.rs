use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::solve::CalibrationResult;
use super::CalibrationError;
use crate::optim::Termination;
use crate::ranging::{ModuleId, OffsetTable};

/// Hand-measured anchor position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorPrior {
    pub id: ModuleId,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HemisphereSide {
    Above,
    Below,
}

/// Side of the prior plane (normal oriented toward +z) that `anchor` must
/// end up on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hemisphere {
    pub anchor: ModuleId,
    pub side: HemisphereSide,
}

/// Calibration inputs that do not come from the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorsFile {
    /// The first three fix the frame.
    pub anchors: Vec<AnchorPrior>,
    #[serde(default)]
    pub hemisphere: Option<Hemisphere>,
    /// Module id pairs sharing a bar.
    #[serde(default)]
    pub bars: Vec<[ModuleId; 2]>,
    /// Module-to-module distance along a bar (m).
    pub bar_length: f64,
    /// Random subsample size; all samples when absent.
    #[serde(default)]
    pub samples: Option<usize>,
}

fn file_error(path: &Path, message: impl ToString) -> CalibrationError {
    CalibrationError::File { path: path.display().to_string(), message: message.to_string() }
}

impl PriorsFile {
    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        let text = std::fs::read_to_string(path).map_err(|e| file_error(path, e))?;
        toml::from_str(&text).map_err(|e| file_error(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<(), CalibrationError> {
        let text = toml::to_string_pretty(self).map_err(|e| file_error(path, e))?;
        std::fs::write(path, text).map_err(|e| file_error(path, e))
    }

    /// Bars as float-index pairs; pairs naming unknown floats are dropped.
    pub fn bar_indices(&self, float_ids: &[ModuleId]) -> Vec<(usize, usize)> {
        let pos = |id| float_ids.iter().position(|&f| f == id);
        self.bars.iter().filter_map(|&[a, b]| Some((pos(a)?, pos(b)?))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorEntry {
    pub id: ModuleId,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDiagnostics {
    pub loss: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    pub converged: bool,
    pub gauge_ambiguous: bool,
    pub reflected: bool,
    pub samples: usize,
    pub warnings: Vec<String>,
}

/// Calibration output consumed by the filter: anchor positions, every known
/// offset in the ranging convention and solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub anchors: Vec<AnchorEntry>,
    pub offsets: OffsetTable,
    pub diagnostics: CalibrationDiagnostics,
}

impl CalibrationFile {
    pub fn from_result(result: &CalibrationResult, internal: Option<&OffsetTable>) -> Self {
        let mut offsets = result.offset_table();
        if let Some(t) = internal {
            offsets.merge(t);
        }
        Self {
            anchors: result
                .anchor_ids
                .iter()
                .zip(&result.params.anchors)
                .map(|(&id, p)| AnchorEntry { id, position: [p.x, p.y, p.z] })
                .collect(),
            offsets,
            diagnostics: CalibrationDiagnostics {
                loss: result.loss,
                iterations: result.report.iterations,
                evaluations: result.report.evaluations,
                termination: result.report.termination,
                converged: result.converged(),
                gauge_ambiguous: result.gauge_ambiguous,
                reflected: result.reflected,
                samples: result.params.floats.len(),
                warnings: result.warnings.clone(),
            },
        }
    }

    pub fn anchor_positions(&self) -> BTreeMap<ModuleId, Vector3<f64>> {
        self.anchors.iter().map(|a| (a.id, Vector3::from(a.position))).collect()
    }

    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        let text = std::fs::read_to_string(path).map_err(|e| file_error(path, e))?;
        serde_json::from_str(&text).map_err(|e| file_error(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<(), CalibrationError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| file_error(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| file_error(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn priors_toml_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("priors.toml");
        let p = PriorsFile {
            anchors: vec![AnchorPrior { id: 0, position: [0.0, 0.0, 2.4] }],
            hemisphere: Some(Hemisphere { anchor: 1, side: HemisphereSide::Below }),
            bars: vec![[8, 9]],
            bar_length: 1.3,
            samples: Some(400),
        };
        p.save(&path).unwrap();
        assert_eq!(PriorsFile::load(&path).unwrap(), p);
        assert_eq!(p.bar_indices(&[9, 8]), vec![(1, 0)]);
    }

    #[test]
    fn missing_priors_file_names_path() {
        let err = PriorsFile::load(Path::new("/nonexistent/priors.toml")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/priors.toml"));
    }
}

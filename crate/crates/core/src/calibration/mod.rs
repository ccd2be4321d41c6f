//! Joint estimation of the fixed-anchor constellation and the pairwise
//! anchor/robot distance offsets from raw ranges recorded while the robot
//! moves, followed by robot-internal offset estimation.
//!
//! Parameters are packed as `[anchors (3 na) | floats (3 nf per sample) |
//! offsets (na x nf, anchor-major)]`. Inside the loss an offset enters as
//! `(|a - f| - offset - raw)^2`; [`CalibrationResult::offset_table`] flips
//! it to the ranging convention `corrected = raw - offset`.

mod file;
mod solve;
mod synthetic;

pub use file::{
    AnchorEntry, AnchorPrior, CalibrationDiagnostics, CalibrationFile, Hemisphere, HemisphereSide, PriorsFile,
};
pub use solve::{calibrate, internal_offsets, CalibrationConfig, CalibrationResult};
pub use synthetic::{desk_anchors, synthetic_dataset, SyntheticCalibration, SyntheticTruth};

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ranging::{LogRecord, ModuleId};

/// Minimum accepted anchor ranges for a float to count in a sample.
pub const MIN_ANCHOR_RANGES: usize = 4;

const DEGENERATE_DISTANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("calibration dataset has no samples")]
    EmptyDataset,
    #[error("sample {sample}: index out of range ({what})")]
    InvalidIndex { sample: usize, what: &'static str },
    #[error("prior references unknown anchor {0}")]
    UnknownAnchor(ModuleId),
    #[error("parameter vector has length {actual}, expected {expected}")]
    Dimension { expected: usize, actual: usize },
    #[error("coincident points in sample {sample} ({what}); gradient undefined")]
    SingularGradient { sample: usize, what: String },
    #[error("pair ({i}, {j}) has {count} co-visible samples, need {required}")]
    MissingPair { i: ModuleId, j: ModuleId, count: usize, required: usize },
    #[error("{path}: {message}")]
    File { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorRange {
    pub anchor: usize,
    pub float: usize,
    pub raw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InternalRange {
    pub a: usize,
    pub b: usize,
    pub raw: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub time: f64,
    pub anchor_ranges: Vec<AnchorRange>,
    pub internal_ranges: Vec<InternalRange>,
}

/// Raw ranges grouped into samples. Indices in the samples refer to
/// positions in `anchor_ids` / `float_ids`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDataset {
    pub anchor_ids: Vec<ModuleId>,
    pub float_ids: Vec<ModuleId>,
    /// Float index pairs sharing a bar.
    pub bars: Vec<(usize, usize)>,
    /// Distance between the two modules of a bar (m).
    pub bar_length: f64,
    /// Weight of the bar-length terms relative to the range terms.
    pub bar_weight: f64,
    pub samples: Vec<CalibrationSample>,
}

impl CalibrationDataset {
    pub fn new(
        anchor_ids: Vec<ModuleId>,
        float_ids: Vec<ModuleId>,
        bars: Vec<(usize, usize)>,
        bar_length: f64,
        samples: Vec<CalibrationSample>,
    ) -> Result<Self, CalibrationError> {
        let ds = Self { anchor_ids, float_ids, bars, bar_length, bar_weight: 1.0, samples };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.samples.is_empty() {
            return Err(CalibrationError::EmptyDataset);
        }
        let (na, nf) = (self.anchor_ids.len(), self.float_ids.len());
        if self.bars.iter().any(|&(a, b)| a >= nf || b >= nf || a == b) {
            return Err(CalibrationError::InvalidIndex { sample: 0, what: "bar" });
        }
        for (t, s) in self.samples.iter().enumerate() {
            if s.anchor_ranges.iter().any(|r| r.anchor >= na || r.float >= nf) {
                return Err(CalibrationError::InvalidIndex { sample: t, what: "anchor range" });
            }
            if s.internal_ranges.iter().any(|r| r.a >= nf || r.b >= nf || r.a == r.b) {
                return Err(CalibrationError::InvalidIndex { sample: t, what: "internal range" });
            }
        }
        Ok(())
    }

    /// Groups accepted log records by exact time stamp. Ranges between an
    /// anchor and a float become anchor ranges, float/float ranges become
    /// internal ranges; everything else is ignored.
    pub fn from_log(
        records: &[LogRecord],
        anchor_ids: Vec<ModuleId>,
        float_ids: Vec<ModuleId>,
        bars: Vec<(usize, usize)>,
        bar_length: f64,
    ) -> Result<Self, CalibrationError> {
        let anchor_index: BTreeMap<ModuleId, usize> =
            anchor_ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
        let float_index: BTreeMap<ModuleId, usize> =
            float_ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
        let mut samples: Vec<CalibrationSample> = Vec::new();
        for r in records.iter().filter(|r| r.accepted && r.raw.is_finite()) {
            if samples.last().is_none_or(|s| s.time != r.t) {
                samples.push(CalibrationSample { time: r.t, ..Default::default() });
            }
            let s = samples.last_mut().expect("pushed");
            match (anchor_index.get(&r.i), float_index.get(&r.i), float_index.get(&r.j), anchor_index.get(&r.j)) {
                (Some(&anchor), _, Some(&float), _) | (_, Some(&float), _, Some(&anchor)) => {
                    s.anchor_ranges.push(AnchorRange { anchor, float, raw: r.raw })
                }
                (_, Some(&a), Some(&b), _) => s.internal_ranges.push(InternalRange { a, b, raw: r.raw }),
                _ => {}
            }
        }
        Self::new(anchor_ids, float_ids, bars, bar_length, samples)
    }

    /// Modules that computed a distance are floats; modules that only ever
    /// initiate are anchors.
    pub fn roles_from_log(records: &[LogRecord]) -> (Vec<ModuleId>, Vec<ModuleId>) {
        let floats: std::collections::BTreeSet<ModuleId> = records.iter().map(|r| r.direction).collect();
        let anchors: std::collections::BTreeSet<ModuleId> = records
            .iter()
            .flat_map(|r| [r.i, r.j])
            .filter(|id| !floats.contains(id))
            .collect();
        (anchors.into_iter().collect(), floats.into_iter().collect())
    }

    /// Random subset of `n` samples (all if `n` exceeds the count), in time
    /// order.
    pub fn subsample(&self, n: usize, seed: u64) -> Self {
        if n >= self.samples.len() {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, self.samples.len(), n).into_vec();
        idx.sort_unstable();
        Self { samples: idx.into_iter().map(|k| self.samples[k].clone()).collect(), ..self.clone() }
    }

    /// `alpha[t][j]`: float `j` has at least [`MIN_ANCHOR_RANGES`] anchor
    /// ranges in sample `t`.
    pub fn alpha(&self) -> Vec<Vec<bool>> {
        self.samples
            .iter()
            .map(|s| {
                let mut count = vec![0usize; self.float_ids.len()];
                for r in &s.anchor_ranges {
                    count[r.float] += 1;
                }
                count.into_iter().map(|c| c >= MIN_ANCHOR_RANGES).collect()
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        let (na, nf) = (self.anchor_ids.len(), self.float_ids.len());
        3 * na + 3 * nf * self.samples.len() + na * nf
    }
}

/// Unpacked parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationParams {
    pub anchors: Vec<Vector3<f64>>,
    /// `floats[t][j]`
    pub floats: Vec<Vec<Vector3<f64>>>,
    /// anchors x floats, in the loss convention `|a - f| = raw + offset`.
    pub offsets: DMatrix<f64>,
}

impl CalibrationParams {
    pub fn zeros(ds: &CalibrationDataset) -> Self {
        let (na, nf) = (ds.anchor_ids.len(), ds.float_ids.len());
        Self {
            anchors: vec![Vector3::zeros(); na],
            floats: vec![vec![Vector3::zeros(); nf]; ds.samples.len()],
            offsets: DMatrix::zeros(na, nf),
        }
    }

    pub fn pack(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(
            3 * self.anchors.len() + self.floats.iter().map(|f| 3 * f.len()).sum::<usize>() + self.offsets.len(),
        );
        for a in &self.anchors {
            v.extend_from_slice(a.as_slice());
        }
        for sample in &self.floats {
            for f in sample {
                v.extend_from_slice(f.as_slice());
            }
        }
        for a in 0..self.offsets.nrows() {
            for j in 0..self.offsets.ncols() {
                v.push(self.offsets[(a, j)]);
            }
        }
        DVector::from_vec(v)
    }

    pub fn unpack(ds: &CalibrationDataset, x: &DVector<f64>) -> Result<Self, CalibrationError> {
        let layout = Layout::of(ds);
        if x.len() != layout.len() {
            return Err(CalibrationError::Dimension { expected: layout.len(), actual: x.len() });
        }
        let v3 = |k: usize| Vector3::new(x[k], x[k + 1], x[k + 2]);
        Ok(Self {
            anchors: (0..layout.na).map(|a| v3(layout.anchor(a))).collect(),
            floats: (0..layout.ns)
                .map(|t| (0..layout.nf).map(|j| v3(layout.float(t, j))).collect())
                .collect(),
            offsets: DMatrix::from_fn(layout.na, layout.nf, |a, j| x[layout.offset(a, j)]),
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub na: usize,
    pub nf: usize,
    pub ns: usize,
}

impl Layout {
    pub fn of(ds: &CalibrationDataset) -> Self {
        Self { na: ds.anchor_ids.len(), nf: ds.float_ids.len(), ns: ds.samples.len() }
    }
    pub fn len(&self) -> usize {
        3 * self.na + 3 * self.nf * self.ns + self.na * self.nf
    }
    pub fn anchor(&self, a: usize) -> usize {
        3 * a
    }
    pub fn float(&self, t: usize, j: usize) -> usize {
        3 * self.na + 3 * (t * self.nf + j)
    }
    pub fn offset(&self, a: usize, j: usize) -> usize {
        3 * self.na + 3 * self.nf * self.ns + a * self.nf + j
    }
}

/// Squared range residual `(|anchor - float| - offset - raw)^2`.
pub fn residual(anchor: &Vector3<f64>, float: &Vector3<f64>, offset: f64, raw: f64) -> f64 {
    ((anchor - float).norm() - offset - raw).powi(2)
}

/// Loss and, when `gradient` is given, its gradient (accumulated into it)
/// at packed parameters `x`.
pub(crate) fn evaluate(
    ds: &CalibrationDataset,
    alpha: &[Vec<bool>],
    x: &DVector<f64>,
    mut gradient: Option<&mut DVector<f64>>,
) -> Result<f64, CalibrationError> {
    let layout = Layout::of(ds);
    let v3 = |k: usize| Vector3::new(x[k], x[k + 1], x[k + 2]);
    let mut loss = 0.0;
    for (t, s) in ds.samples.iter().enumerate() {
        for r in &s.anchor_ranges {
            if !alpha[t][r.float] {
                continue;
            }
            let (ka, kf, ko) = (layout.anchor(r.anchor), layout.float(t, r.float), layout.offset(r.anchor, r.float));
            let diff = v3(ka) - v3(kf);
            let dist = diff.norm();
            let e = dist - x[ko] - r.raw;
            loss += e * e;
            if let Some(g) = gradient.as_deref_mut() {
                if dist < DEGENERATE_DISTANCE {
                    return Err(CalibrationError::SingularGradient {
                        sample: t,
                        what: format!("anchor {} and float {}", ds.anchor_ids[r.anchor], ds.float_ids[r.float]),
                    });
                }
                let u = diff * (2.0 * e / dist);
                for c in 0..3 {
                    g[ka + c] += u[c];
                    g[kf + c] -= u[c];
                }
                g[ko] -= 2.0 * e;
            }
        }
        if ds.bar_weight == 0.0 {
            continue;
        }
        for &(a, b) in &ds.bars {
            if !(alpha[t][a] && alpha[t][b]) {
                continue;
            }
            let (ka, kb) = (layout.float(t, a), layout.float(t, b));
            let diff = v3(ka) - v3(kb);
            let dist = diff.norm();
            let e = dist - ds.bar_length;
            loss += ds.bar_weight * e * e;
            if let Some(g) = gradient.as_deref_mut() {
                if dist < DEGENERATE_DISTANCE {
                    return Err(CalibrationError::SingularGradient {
                        sample: t,
                        what: format!("bar floats {} and {}", ds.float_ids[a], ds.float_ids[b]),
                    });
                }
                let u = diff * (2.0 * ds.bar_weight * e / dist);
                for c in 0..3 {
                    g[ka + c] += u[c];
                    g[kb + c] -= u[c];
                }
            }
        }
    }
    Ok(loss)
}

/// Sum of the active range residuals plus the weighted bar-length terms.
pub fn total_loss(params: &CalibrationParams, ds: &CalibrationDataset) -> f64 {
    evaluate(ds, &ds.alpha(), &params.pack(), None).expect("value-only evaluation cannot fail")
}

/// Analytic gradient of [`total_loss`] in packed order.
pub fn loss_gradient(
    params: &CalibrationParams,
    ds: &CalibrationDataset,
) -> Result<DVector<f64>, CalibrationError> {
    let x = params.pack();
    let mut g = DVector::zeros(x.len());
    evaluate(ds, &ds.alpha(), &x, Some(&mut g))?;
    Ok(g)
}

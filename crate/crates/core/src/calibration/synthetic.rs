use nalgebra::{UnitQuaternion, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::file::{AnchorPrior, Hemisphere, HemisphereSide};
use super::{AnchorRange, CalibrationDataset, CalibrationSample, InternalRange};
use crate::ranging::{sensor_position, ModuleId, OffsetTable};
use crate::structure::{build_superball, SuperballParams};

/// Eight anchors around an 11 m x 8.3 m room: corners high, edge midpoints
/// low, listed counter-clockwise from the origin corner.
pub fn desk_anchors() -> Vec<Vector3<f64>> {
    let (w, d, high, low) = (11.0, 8.3, 2.4, 0.6);
    vec![
        Vector3::new(0.0, 0.0, high),
        Vector3::new(w / 2.0, 0.0, low),
        Vector3::new(w, 0.0, high),
        Vector3::new(w, d / 2.0, low),
        Vector3::new(w, d, high),
        Vector3::new(w / 2.0, d, low),
        Vector3::new(0.0, d, high),
        Vector3::new(0.0, d / 2.0, low),
    ]
}

/// Generator for calibration datasets with known truth: the robot's module
/// constellation dropped at random poses inside the room.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCalibration {
    pub anchors: Vec<Vector3<f64>>,
    pub anchor_ids: Vec<ModuleId>,
    /// Anchor indices whose positions are given as priors.
    pub prior_anchors: [usize; 3],
    /// Anchor index pinned below the prior plane.
    pub hemisphere_anchor: usize,
    /// Module positions in the robot frame.
    pub body: Vec<Vector3<f64>>,
    pub float_ids: Vec<ModuleId>,
    pub bars: Vec<(usize, usize)>,
    pub bar_length: f64,
    pub samples: usize,
    /// Gaussian noise on every raw range (m).
    pub noise_sigma: f64,
    /// Anchor/float offsets are drawn uniformly from this range (m).
    pub offset_range: (f64, f64),
    /// Shared offset of every float/float pair; `None` records no internal
    /// ranges.
    pub internal_offset: Option<f64>,
    /// Robot centre x and y ranges (m).
    pub region: [(f64, f64); 2],
}

impl Default for SyntheticCalibration {
    fn default() -> Self {
        let params = SuperballParams::default();
        let model = build_superball(&params).expect("default superball");
        let nodes = model.reference_nodes();
        let mount = 0.1;
        let body: Vec<Vector3<f64>> = (0..model.node_count())
            .map(|k| sensor_position(&model, &nodes.positions, k, mount).expect("bar end"))
            .collect();
        let bars = model.bars().map(|(_, i, j)| (i, j)).collect();
        let anchors = desk_anchors();
        Self {
            anchor_ids: (0..anchors.len() as ModuleId).collect(),
            float_ids: (0..body.len() as ModuleId).map(|k| 8 + k).collect(),
            anchors,
            prior_anchors: [0, 2, 4],
            hemisphere_anchor: 1,
            body,
            bars,
            bar_length: params.rod_length - 2.0 * mount,
            samples: 400,
            noise_sigma: 0.0,
            offset_range: (0.0, 0.5),
            internal_offset: None,
            region: [(2.0, 9.0), (2.0, 6.3)],
        }
    }
}

impl SyntheticCalibration {
    pub fn priors(&self) -> Vec<AnchorPrior> {
        self.prior_anchors
            .iter()
            .map(|&a| {
                let p = self.anchors[a];
                AnchorPrior { id: self.anchor_ids[a], position: [p.x, p.y, p.z] }
            })
            .collect()
    }

    pub fn hemisphere(&self) -> Hemisphere {
        let p: Vec<Vector3<f64>> = self.prior_anchors.iter().map(|&a| self.anchors[a]).collect();
        let mut n = (p[1] - p[0]).cross(&(p[2] - p[0]));
        if n.z < 0.0 {
            n = -n;
        }
        let side = if n.dot(&(self.anchors[self.hemisphere_anchor] - p[0])) >= 0.0 {
            HemisphereSide::Above
        } else {
            HemisphereSide::Below
        };
        Hemisphere { anchor: self.anchor_ids[self.hemisphere_anchor], side }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub anchors: Vec<Vector3<f64>>,
    /// `floats[t][j]`
    pub floats: Vec<Vec<Vector3<f64>>>,
    /// Ranging convention: `raw = distance + offset`.
    pub offsets: OffsetTable,
}

fn random_rotation<R: Rng>(rng: &mut R) -> UnitQuaternion<f64> {
    let v = Vector4::from_fn(|_, _| StandardNormal.sample(rng));
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(v))
}

/// Draws a dataset and the truth it was generated from.
pub fn synthetic_dataset(setup: &SyntheticCalibration, seed: u64) -> (CalibrationDataset, SyntheticTruth) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (setup.noise_sigma > 0.0).then(|| Normal::new(0.0, setup.noise_sigma).expect("finite sigma"));
    let mut offsets = OffsetTable::default();
    for &a in &setup.anchor_ids {
        for &f in &setup.float_ids {
            offsets.set(a, f, rng.random_range(setup.offset_range.0..=setup.offset_range.1));
        }
    }
    if let Some(o) = setup.internal_offset {
        for (k, &a) in setup.float_ids.iter().enumerate() {
            for &b in &setup.float_ids[k + 1..] {
                offsets.set(a, b, o);
            }
        }
    }
    let centroid = setup.body.iter().sum::<Vector3<f64>>() / setup.body.len() as f64;
    let mut samples = Vec::with_capacity(setup.samples);
    let mut floats = Vec::with_capacity(setup.samples);
    for t in 0..setup.samples {
        let rot = random_rotation(&mut rng);
        let rotated: Vec<Vector3<f64>> = setup.body.iter().map(|p| rot * (p - centroid)).collect();
        let lowest = rotated.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
        let shift = Vector3::new(
            rng.random_range(setup.region[0].0..setup.region[0].1),
            rng.random_range(setup.region[1].0..setup.region[1].1),
            rng.random_range(0.05..0.3) - lowest,
        );
        let fs: Vec<Vector3<f64>> = rotated.iter().map(|p| p + shift).collect();
        let mut draw = |d: f64, o: f64| d + o + noise.as_ref().map_or(0.0, |n| n.sample(&mut rng));
        let mut s = CalibrationSample { time: t as f64, ..Default::default() };
        for (a, pa) in setup.anchors.iter().enumerate() {
            for (j, pf) in fs.iter().enumerate() {
                let o = offsets.get_or_zero(setup.anchor_ids[a], setup.float_ids[j]);
                s.anchor_ranges.push(AnchorRange { anchor: a, float: j, raw: draw((pa - pf).norm(), o) });
            }
        }
        if let Some(o) = setup.internal_offset {
            for a in 0..fs.len() {
                for b in 0..fs.len() {
                    if a != b {
                        s.internal_ranges.push(InternalRange { a, b, raw: draw((fs[a] - fs[b]).norm(), o) });
                    }
                }
            }
        }
        samples.push(s);
        floats.push(fs);
    }
    let ds = CalibrationDataset::new(
        setup.anchor_ids.clone(),
        setup.float_ids.clone(),
        setup.bars.clone(),
        setup.bar_length,
        samples,
    )
    .expect("generator emits valid indices");
    (ds, SyntheticTruth { anchors: setup.anchors.clone(), floats, offsets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::spread;

    #[test]
    fn layout_covers_about_91_square_metres() {
        let a = desk_anchors();
        let area = (a[2].x - a[0].x) * (a[4].y - a[2].y);
        assert!((area - 91.0).abs() < 1.0, "{area}");
        assert_eq!(a.len(), 8);
        assert!(spread(&a)[2] > 0.1);
    }

    #[test]
    fn default_hemisphere_is_below() {
        let s = SyntheticCalibration::default();
        assert_eq!(s.hemisphere(), Hemisphere { anchor: 1, side: HemisphereSide::Below });
        assert_eq!(s.priors().len(), 3);
    }

    #[test]
    fn bars_have_the_configured_length() {
        let setup = SyntheticCalibration { samples: 3, ..Default::default() };
        let (ds, truth) = synthetic_dataset(&setup, 1);
        for fs in &truth.floats {
            for &(a, b) in &ds.bars {
                assert!(((fs[a] - fs[b]).norm() - 1.3).abs() < 1e-9);
            }
            assert!(fs.iter().all(|p| p.z > 0.0));
        }
        assert_eq!(ds.samples[0].anchor_ranges.len(), 8 * 12);
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let setup = SyntheticCalibration { samples: 4, noise_sigma: 0.03, ..Default::default() };
        assert_eq!(synthetic_dataset(&setup, 7).0, synthetic_dataset(&setup, 7).0);
    }
}

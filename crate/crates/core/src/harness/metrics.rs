use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::config::MetricsConfig;
use super::HarnessError;
use crate::ukf::FilterStep;

/// Sorted end-cap triple.
pub type Face = [usize; 3];

/// Nodal positions sampled over time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub nodes: Vec<Vec<Vector3<f64>>>,
}

impl Trajectory {
    pub fn push(&mut self, time: f64, nodes: Vec<Vector3<f64>>) {
        self.times.push(time);
        self.nodes.push(nodes);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Interpolated position of one node.
    pub fn node_at(&self, t: f64, node: usize) -> Option<Vector3<f64>> {
        let (&first, &last) = (self.times.first()?, self.times.last()?);
        if t < first - 1e-9 || t > last + 1e-9 {
            return None;
        }
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            return Some(self.nodes[0][node]);
        }
        if k == self.len() {
            return Some(self.nodes[k - 1][node]);
        }
        let f = (t - self.times[k - 1]) / (self.times[k] - self.times[k - 1]);
        let (a, b) = (self.nodes[k - 1][node], self.nodes[k][node]);
        Some(a + (b - a) * f)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.first().map_or(0, Vec::len)
    }

    /// Linear interpolation; `None` outside the sampled span.
    pub fn at(&self, t: f64) -> Option<Vec<Vector3<f64>>> {
        let (&first, &last) = (self.times.first()?, self.times.last()?);
        let eps = 1e-9;
        if t < first - eps || t > last + eps {
            return None;
        }
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            return Some(self.nodes[0].clone());
        }
        if k == self.len() {
            return Some(self.nodes[k - 1].clone());
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let f = (t - t0) / (t1 - t0);
        Some(self.nodes[k - 1].iter().zip(&self.nodes[k]).map(|(a, b)| a + (b - a) * f).collect())
    }
}

/// Filter output arranged for scoring.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimateSeries {
    pub trajectory: Trajectory,
    pub cov_trace: Vec<f64>,
    pub node_sigma: Vec<Vec<f64>>,
}

impl EstimateSeries {
    pub fn from_steps(steps: &[FilterStep]) -> Self {
        let mut out = Self::default();
        for s in steps {
            let n = s.position_sigma.len();
            let nodes = (0..n).map(|i| Vector3::new(s.mean[3 * i], s.mean[3 * i + 1], s.mean[3 * i + 2])).collect();
            out.trajectory.push(s.time, nodes);
            out.cov_trace.push(s.cov_trace);
            out.node_sigma.push(s.position_sigma.clone());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceTransition {
    pub time: f64,
    pub from: Face,
    pub to: Face,
}

fn lowest_three(nodes: &[Vector3<f64>]) -> Face {
    let mut idx: Vec<usize> = (0..nodes.len()).collect();
    idx.sort_by(|&a, &b| nodes[a].z.total_cmp(&nodes[b].z).then(a.cmp(&b)));
    let mut f = [idx[0], idx[1], idx[2]];
    f.sort_unstable();
    f
}

fn face_height(nodes: &[Vector3<f64>], face: &Face) -> f64 {
    face.iter().map(|&i| nodes[i].z).fold(f64::NEG_INFINITY, f64::max)
}

/// Ground triangle tracker: the three lowest end caps, replaced only when a
/// new triple's highest vertex sits `hysteresis` below the current one's.
#[derive(Debug, Clone)]
pub struct FaceDetector {
    hysteresis: f64,
    current: Option<Face>,
}

impl FaceDetector {
    pub fn new(hysteresis: f64) -> Self {
        Self { hysteresis, current: None }
    }

    pub fn current(&self) -> Option<Face> {
        self.current
    }

    /// Returns the new face when the ground triangle changes.
    pub fn observe(&mut self, nodes: &[Vector3<f64>]) -> Option<Face> {
        if nodes.len() < 3 {
            return None;
        }
        let candidate = lowest_three(nodes);
        match self.current {
            None => {
                self.current = Some(candidate);
                None
            }
            Some(cur) if cur != candidate
                && face_height(nodes, &candidate) + self.hysteresis < face_height(nodes, &cur) =>
            {
                self.current = Some(candidate);
                Some(candidate)
            }
            _ => None,
        }
    }
}

/// Ground triangle at every sample plus the transitions between them.
pub fn face_history(traj: &Trajectory, hysteresis: f64) -> (Vec<Face>, Vec<FaceTransition>) {
    let mut det = FaceDetector::new(hysteresis);
    let mut faces = Vec::with_capacity(traj.len());
    let mut transitions = Vec::new();
    for (t, nodes) in traj.times.iter().zip(&traj.nodes) {
        let before = det.current();
        if let Some(to) = det.observe(nodes) {
            transitions.push(FaceTransition { time: *t, from: before.expect("set on first sample"), to });
        }
        faces.extend(det.current());
    }
    (faces, transitions)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedEndCap {
    pub node: usize,
    pub rms: f64,
    /// Positive when the estimate trails the truth (s).
    pub lag: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Scored samples after the settle time.
    pub samples: usize,
    pub settle_time: f64,
    pub endcap_rms: Vec<f64>,
    pub rms: f64,
    pub max_endcap_rms: f64,
    pub tracked: Vec<TrackedEndCap>,
    pub initial_face_true: Option<Face>,
    pub initial_face_estimated: Option<Face>,
    pub initial_face_correct: bool,
    pub true_transitions: Vec<FaceTransition>,
    pub estimated_transitions: Vec<FaceTransition>,
    pub transitions_detected: Vec<bool>,
    pub all_transitions_detected: bool,
    /// RMS centroid error of the true ground triangle after the first roll.
    pub post_roll_centroid_error: Option<f64>,
    /// RMS error of the mean end-cap position after the first roll.
    pub post_roll_com_error: Option<f64>,
    pub mean_cov_trace: f64,
    pub max_cov_trace: f64,
    pub final_cov_trace: f64,
    /// Time from the spurious sample until every end cap is within 2σ.
    pub spurious_recovery: Option<f64>,
    pub packets: usize,
    pub packet_acceptance_rate: Option<f64>,
    pub filter_warnings: usize,
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    if a.len() < 3 {
        return None;
    }
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

/// Shift `τ` (within ±`window`, 1 ms grid) maximizing the correlation of
/// the estimate at `t` with the truth at `t - τ`, on the axis along which
/// the end cap moves most.
pub fn estimate_lag(truth: &Trajectory, estimate: &Trajectory, node: usize, from: f64, window: f64) -> Option<f64> {
    let idx: Vec<usize> = (0..estimate.len()).filter(|&k| estimate.times[k] >= from).collect();
    let truth_now: Vec<Vector3<f64>> = idx.iter().map(|&k| truth.node_at(estimate.times[k], node)).collect::<Option<_>>()?;
    let axis = (0..3)
        .max_by(|&a, &b| {
            let var = |c: usize| {
                let m = truth_now.iter().map(|p| p[c]).sum::<f64>() / truth_now.len() as f64;
                truth_now.iter().map(|p| (p[c] - m).powi(2)).sum::<f64>()
            };
            var(a).total_cmp(&var(b))
        })
        .expect("three axes");
    let steps = (window / 0.001).round() as i64;
    let mut best: Option<(f64, f64)> = None;
    for s in -steps..=steps {
        let tau = s as f64 * 0.001;
        let (mut e, mut x) = (Vec::new(), Vec::new());
        for &k in &idx {
            if let Some(n) = truth.node_at(estimate.times[k] - tau, node) {
                e.push(estimate.nodes[k][node][axis]);
                x.push(n[axis]);
            }
        }
        if let Some(r) = pearson(&e, &x) {
            if best.is_none_or(|(_, b)| r > b) {
                best = Some((tau, r));
            }
        }
    }
    best.map(|(tau, _)| tau)
}

/// Scores an estimate against the truth on the estimate's time grid.
pub fn compute_metrics(
    truth: &Trajectory,
    estimate: &EstimateSeries,
    spurious_time: Option<f64>,
    config: &MetricsConfig,
) -> Result<RunMetrics, HarnessError> {
    let est = &estimate.trajectory;
    let n = est.node_count();
    if truth.node_count() != n {
        return Err(HarnessError::Metrics(format!("truth has {} end caps, estimate {n}", truth.node_count())));
    }
    let aligned: Vec<(usize, Vec<Vector3<f64>>)> =
        (0..est.len()).filter_map(|k| truth.at(est.times[k]).map(|t| (k, t))).collect();
    let scored: Vec<&(usize, Vec<Vector3<f64>>)> =
        aligned.iter().filter(|(k, _)| est.times[*k] >= config.settle_time).collect();
    if scored.is_empty() {
        return Err(HarnessError::Metrics("empty overlap window".into()));
    }
    let mut sq = vec![0.0; n];
    for (k, t) in &scored {
        for i in 0..n {
            sq[i] += (est.nodes[*k][i] - t[i]).norm_squared();
        }
    }
    let m = scored.len() as f64;
    let endcap_rms: Vec<f64> = sq.iter().map(|s| (s / m).sqrt()).collect();
    let rms = (sq.iter().sum::<f64>() / (m * n as f64)).sqrt();
    let max_endcap_rms = endcap_rms.iter().copied().fold(0.0, f64::max);
    let tracked = config
        .tracked
        .iter()
        .filter(|&&node| node < n)
        .map(|&node| TrackedEndCap {
            node,
            rms: endcap_rms[node],
            lag: estimate_lag(truth, est, node, config.settle_time, config.lag_window),
        })
        .collect();

    // faces are read once the estimate has settled
    let aligned_truth = Trajectory {
        times: scored.iter().map(|(k, _)| est.times[*k]).collect(),
        nodes: scored.iter().map(|(_, t)| t.clone()).collect(),
    };
    let aligned_est = Trajectory {
        times: aligned_truth.times.clone(),
        nodes: scored.iter().map(|(k, _)| est.nodes[*k].clone()).collect(),
    };
    let (true_faces, true_transitions) = face_history(&aligned_truth, config.hysteresis);
    let (est_faces, estimated_transitions) = face_history(&aligned_est, config.hysteresis);
    let transitions_detected: Vec<bool> = true_transitions
        .iter()
        .map(|tt| {
            estimated_transitions
                .iter()
                .any(|et| et.to == tt.to && (et.time - tt.time).abs() <= config.transition_tolerance)
        })
        .collect();

    let (mut post_roll_centroid_error, mut post_roll_com_error) = (None, None);
    if let Some(first) = true_transitions.first() {
        let from = first.time + config.roll_margin;
        let (mut c2, mut g2, mut count) = (0.0, 0.0, 0usize);
        for (s, (t, nodes)) in aligned_truth.times.iter().zip(&aligned_truth.nodes).enumerate() {
            if *t < from {
                continue;
            }
            let face = true_faces[s];
            let centroid = |p: &[Vector3<f64>]| face.iter().map(|&i| p[i]).sum::<Vector3<f64>>() / 3.0;
            let mean = |p: &[Vector3<f64>]| p.iter().sum::<Vector3<f64>>() / p.len() as f64;
            c2 += (centroid(&aligned_est.nodes[s]) - centroid(nodes)).norm_squared();
            g2 += (mean(&aligned_est.nodes[s]) - mean(nodes)).norm_squared();
            count += 1;
        }
        if count > 0 {
            post_roll_centroid_error = Some((c2 / count as f64).sqrt());
            post_roll_com_error = Some((g2 / count as f64).sqrt());
        }
    }

    let traces: Vec<f64> = scored.iter().map(|(k, _)| estimate.cov_trace[*k]).collect();
    let spurious_recovery = spurious_time.and_then(|ts| {
        scored.iter().find_map(|(k, t)| {
            let time = est.times[*k];
            let within = (0..n).all(|i| (est.nodes[*k][i] - t[i]).norm() <= 2.0 * estimate.node_sigma[*k][i]);
            (time >= ts && within).then_some(time - ts)
        })
    });

    Ok(RunMetrics {
        samples: scored.len(),
        settle_time: config.settle_time,
        endcap_rms,
        rms,
        max_endcap_rms,
        tracked,
        initial_face_true: true_faces.first().copied(),
        initial_face_estimated: est_faces.first().copied(),
        initial_face_correct: true_faces.first().is_some() && true_faces.first() == est_faces.first(),
        all_transitions_detected: transitions_detected.iter().all(|&d| d),
        true_transitions,
        estimated_transitions,
        transitions_detected,
        post_roll_centroid_error,
        post_roll_com_error,
        mean_cov_trace: traces.iter().sum::<f64>() / traces.len() as f64,
        max_cov_trace: traces.iter().copied().fold(0.0, f64::max),
        final_cov_trace: *traces.last().expect("non-empty"),
        spurious_recovery,
        packets: 0,
        packet_acceptance_rate: None,
        filter_warnings: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tetra(shift: Vector3<f64>) -> Vec<Vector3<f64>> {
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.3, 0.3, 1.0]]
            .iter()
            .map(|p| Vector3::from(*p) + shift)
            .collect()
    }

    fn series(traj: &Trajectory) -> EstimateSeries {
        EstimateSeries {
            trajectory: traj.clone(),
            cov_trace: vec![1.0; traj.len()],
            node_sigma: vec![vec![0.5; traj.node_count()]; traj.len()],
        }
    }

    fn config() -> MetricsConfig {
        MetricsConfig { settle_time: 0.0, tracked: vec![], ..MetricsConfig::default() }
    }

    #[test]
    fn identical_trajectories_score_zero() {
        let mut t = Trajectory::default();
        for k in 0..50 {
            t.push(k as f64 * 0.1, tetra(Vector3::new(0.01 * k as f64, 0.0, 0.0)));
        }
        let m = compute_metrics(&t, &series(&t), None, &config()).unwrap();
        assert_eq!(m.rms, 0.0);
        assert!(m.endcap_rms.iter().all(|&r| r == 0.0));
        assert!(m.initial_face_correct);
        assert_eq!(m.samples, 50);
    }

    #[test]
    fn constant_offset_scores_offset() {
        let mut truth = Trajectory::default();
        let mut est = Trajectory::default();
        for k in 0..20 {
            truth.push(k as f64, tetra(Vector3::zeros()));
            est.push(k as f64, tetra(Vector3::new(0.1, 0.0, 0.0)));
        }
        let m = compute_metrics(&truth, &series(&est), None, &config()).unwrap();
        assert_relative_eq!(m.rms, 0.1, epsilon = 1e-12);
        assert_relative_eq!(m.max_endcap_rms, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn empty_overlap_is_an_error() {
        let mut truth = Trajectory::default();
        truth.push(0.0, tetra(Vector3::zeros()));
        truth.push(1.0, tetra(Vector3::zeros()));
        let mut est = Trajectory::default();
        est.push(5.0, tetra(Vector3::zeros()));
        assert!(matches!(compute_metrics(&truth, &series(&est), None, &config()), Err(HarnessError::Metrics(_))));
    }

    #[test]
    fn interpolation_between_samples() {
        let mut t = Trajectory::default();
        t.push(0.0, vec![Vector3::zeros(); 3]);
        t.push(1.0, vec![Vector3::new(2.0, 0.0, 0.0); 3]);
        assert_relative_eq!(t.at(0.25).unwrap()[1].x, 0.5);
        assert!(t.at(1.5).is_none());
    }

    /// Four nodes; node `low` sinks while the others stay, then rises again.
    fn scripted_roll() -> (Trajectory, Vec<f64>) {
        let mut t = Trajectory::default();
        let base = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(1.0, 1.0, 0.5),
        ];
        for k in 0..200 {
            let time = k as f64 * 0.1;
            let mut nodes = base.clone();
            // node 3 comes down at t = 5 and node 0 goes up; back at t = 12
            if (5.0..12.0).contains(&time) {
                nodes[3].z = 0.0;
                nodes[0].z = 0.5;
            }
            t.push(time, nodes);
        }
        (t, vec![5.0, 12.0])
    }

    #[test]
    fn scripted_transitions_detected_on_time() {
        let (t, scripted) = scripted_roll();
        let (faces, transitions) = face_history(&t, 0.05);
        assert_eq!(faces[0], [0, 1, 2]);
        assert_eq!(transitions.len(), 2);
        for (tr, want) in transitions.iter().zip(&scripted) {
            assert!((tr.time - want).abs() <= 1.0);
        }
        assert_eq!(transitions[0].to, [1, 2, 3]);
        let m = compute_metrics(&t, &series(&t), None, &config()).unwrap();
        assert!(m.all_transitions_detected);
        assert_eq!(m.post_roll_centroid_error, Some(0.0));
    }

    #[test]
    fn hysteresis_ignores_small_dips() {
        let mut det = FaceDetector::new(0.05);
        let mut nodes = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(1.0, 1.0, 0.02),
        ];
        det.observe(&nodes);
        nodes[2].z = 0.03;
        assert_eq!(det.observe(&nodes), None);
        assert_eq!(det.current(), Some([0, 1, 2]));
    }

    #[test]
    fn delayed_estimate_has_positive_lag() {
        let mut truth = Trajectory::default();
        for k in 0..=20_000 {
            let t = k as f64 * 1e-3;
            let z = 0.2 * (0.7 * t).sin();
            truth.push(t, vec![Vector3::new(0.0, 0.0, z), Vector3::zeros(), Vector3::x(), Vector3::y()]);
        }
        let mut est = Trajectory::default();
        for k in 10..200 {
            let t = k as f64 * 0.1;
            est.push(t, truth.at(t - 0.15).unwrap());
        }
        let lag = estimate_lag(&truth, &est, 0, 2.0, 1.0).unwrap();
        assert_relative_eq!(lag, 0.15, epsilon = 1e-9);
    }

    #[test]
    fn recovery_time_after_spurious_sample() {
        let mut truth = Trajectory::default();
        let mut est = Trajectory::default();
        for k in 0..100 {
            let t = k as f64 * 0.1;
            truth.push(t, tetra(Vector3::zeros()));
            let err = if (3.0..4.0).contains(&t) { 2.0 } else { 0.0 };
            est.push(t, tetra(Vector3::new(err, 0.0, 0.0)));
        }
        let m = compute_metrics(&truth, &series(&est), Some(3.0), &config()).unwrap();
        assert_relative_eq!(m.spurious_recovery.unwrap(), 1.0, epsilon = 1e-9);
    }
}

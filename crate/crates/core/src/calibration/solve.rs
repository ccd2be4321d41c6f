use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::file::{AnchorPrior, Hemisphere, HemisphereSide};
use super::{evaluate, CalibrationDataset, CalibrationError, CalibrationParams, Layout};
use crate::geometry::{linear_multilateration, multilaterate, range_cost, spread, trilaterate};
use crate::optim::{minimize, LbfgsConfig, LbfgsReport};
use crate::ranging::{ModuleId, OffsetTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub lbfgs: LbfgsConfig,
    /// Block-coordinate passes (floats, then anchors and offsets) before the
    /// joint solve.
    pub refinement_passes: usize,
    pub seed: u64,
    /// Co-visible samples required per internal pair.
    pub min_internal_samples: usize,
    /// Rounds of re-seating floats caught in a mirrored fold, each followed
    /// by another joint solve.
    pub refold_rounds: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            lbfgs: LbfgsConfig {
                max_iterations: 20_000,
                gradient_tolerance: 1e-9,
                function_tolerance: 1e-14,
                ..LbfgsConfig::default()
            },
            refinement_passes: 4,
            seed: 0,
            min_internal_samples: 5,
            refold_rounds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub anchor_ids: Vec<ModuleId>,
    pub float_ids: Vec<ModuleId>,
    pub params: CalibrationParams,
    /// `active[t][j]` mirrors the dataset indicator.
    pub active: Vec<Vec<bool>>,
    pub loss: f64,
    pub report: LbfgsReport,
    /// Fewer than three anchor priors: the frame is arbitrary.
    pub gauge_ambiguous: bool,
    /// The solution was mirrored through the prior plane to satisfy the
    /// hemisphere constraint.
    pub reflected: bool,
    pub warnings: Vec<String>,
}

impl CalibrationResult {
    pub fn converged(&self) -> bool {
        self.report.converged()
    }

    pub fn anchor_positions(&self) -> BTreeMap<ModuleId, Vector3<f64>> {
        self.anchor_ids.iter().copied().zip(self.params.anchors.iter().copied()).collect()
    }

    /// Anchor/float offsets in the ranging convention (`corrected = raw -
    /// offset`).
    pub fn offset_table(&self) -> OffsetTable {
        let mut t = OffsetTable::default();
        for (a, &ia) in self.anchor_ids.iter().enumerate() {
            for (j, &jf) in self.float_ids.iter().enumerate() {
                t.set(ia, jf, -self.params.offsets[(a, j)]);
            }
        }
        t
    }
}

/// Plane through the three priors with its normal oriented toward +z (or
/// along the raw cross product for a vertical plane).
fn prior_plane(p: &[Vector3<f64>; 3]) -> (Vector3<f64>, Vector3<f64>) {
    let mut n = (p[1] - p[0]).cross(&(p[2] - p[0]));
    if n.z < 0.0 {
        n = -n;
    }
    (p[0], n.normalize())
}

fn reflect(x: &Vector3<f64>, origin: &Vector3<f64>, normal: &Vector3<f64>) -> Vector3<f64> {
    x - normal * (2.0 * normal.dot(&(x - origin)))
}

/// Estimates anchors, per-sample float positions and anchor/float offsets.
///
/// With three or more priors the first three fix the frame up to a
/// reflection through their plane, which `hemisphere` resolves. Remaining
/// priors only seed the initial guess. With fewer than three priors the
/// result is flagged gauge-ambiguous.
pub fn calibrate(
    ds: &CalibrationDataset,
    priors: &[AnchorPrior],
    hemisphere: Option<&Hemisphere>,
    config: &CalibrationConfig,
) -> Result<CalibrationResult, CalibrationError> {
    ds.validate()?;
    let layout = Layout::of(ds);
    let alpha = ds.alpha();
    let anchor_index: BTreeMap<ModuleId, usize> =
        ds.anchor_ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
    let mut prior_idx = Vec::new();
    for p in priors {
        let &a = anchor_index.get(&p.id).ok_or(CalibrationError::UnknownAnchor(p.id))?;
        prior_idx.push((a, Vector3::from(p.position)));
    }
    let gauge_ambiguous = prior_idx.len() < 3;
    let mut warnings = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut p = CalibrationParams::zeros(ds);
    let mut known = vec![false; layout.na];
    for &(a, pos) in &prior_idx {
        p.anchors[a] = pos;
        known[a] = true;
    }
    let fixed: Vec<usize> = if gauge_ambiguous { vec![] } else { prior_idx[..3].iter().map(|&(a, _)| a).collect() };

    if gauge_ambiguous {
        let scale = ds
            .samples
            .iter()
            .flat_map(|s| s.anchor_ranges.iter().map(|r| r.raw))
            .fold(1.0, f64::max);
        for a in 0..layout.na {
            if !known[a] {
                p.anchors[a] = Vector3::new(rng.random(), rng.random(), rng.random()) * scale;
                known[a] = true;
            }
        }
    }

    let mut float_known = vec![vec![false; layout.nf]; layout.ns];
    if !gauge_ambiguous {
        let centres = [prior_idx[0].1, prior_idx[1].1, prior_idx[2].1];
        let (_, normal) = prior_plane(&centres);
        let ids = [prior_idx[0].0, prior_idx[1].0, prior_idx[2].0];
        for (t, s) in ds.samples.iter().enumerate() {
            for j in 0..layout.nf {
                if !alpha[t][j] {
                    continue;
                }
                let raw = |a: usize| s.anchor_ranges.iter().find(|r| r.anchor == a && r.float == j).map(|r| r.raw);
                let (Some(r0), Some(r1), Some(r2)) = (raw(ids[0]), raw(ids[1]), raw(ids[2])) else { continue };
                let Some(sol) = trilaterate(centres, [r0, r1, r2]) else { continue };
                // one consistent side; the hemisphere step fixes the mirror
                let pick = if normal.dot(&(sol[0] - centres[0])) < 0.0 { sol[0] } else { sol[1] };
                p.floats[t][j] = pick;
                float_known[t][j] = true;
            }
        }
        for a in 0..layout.na {
            if !known[a] {
                if let Some(pos) = locate_anchor(ds, &alpha, &p, &float_known, a) {
                    p.anchors[a] = pos;
                    known[a] = true;
                }
            }
        }
    }
    for (t, s) in ds.samples.iter().enumerate() {
        for j in 0..layout.nf {
            if alpha[t][j] && !float_known[t][j] {
                let (c, r): (Vec<_>, Vec<_>) = s
                    .anchor_ranges
                    .iter()
                    .filter(|m| m.float == j && known[m.anchor])
                    .map(|m| (p.anchors[m.anchor], m.raw))
                    .unzip();
                if c.len() >= 3 {
                    p.floats[t][j] = locate_point(&c, &r, None);
                    float_known[t][j] = true;
                }
            }
        }
    }
    reseat_outliers(ds, &alpha, &mut p, &known);
    for a in 0..layout.na {
        if !known[a] {
            warnings.push(format!("anchor {} could not be initialised", ds.anchor_ids[a]));
            p.anchors[a] = Vector3::new(rng.random(), rng.random(), rng.random());
        }
    }

    for _ in 0..config.refinement_passes {
        estimate_offsets(ds, &alpha, &mut p);
        refine_floats(ds, &alpha, &mut p, false);
        for a in 0..layout.na {
            if !fixed.contains(&a) {
                refine_anchor(ds, &alpha, &mut p, a);
            }
        }
    }
    estimate_offsets(ds, &alpha, &mut p);

    // free variables: everything except fixed priors, inactive floats and
    // offsets of pairs never observed
    let mut free = vec![true; layout.len()];
    for &a in &fixed {
        free[layout.anchor(a)..layout.anchor(a) + 3].iter_mut().for_each(|f| *f = false);
    }
    let mut observed = DMatrix::from_element(layout.na, layout.nf, false);
    for (t, s) in ds.samples.iter().enumerate() {
        for j in 0..layout.nf {
            if !alpha[t][j] {
                let k = layout.float(t, j);
                free[k..k + 3].iter_mut().for_each(|f| *f = false);
            }
        }
        for r in s.anchor_ranges.iter().filter(|r| alpha[t][r.float]) {
            observed[(r.anchor, r.float)] = true;
        }
    }
    for a in 0..layout.na {
        for j in 0..layout.nf {
            if !observed[(a, j)] {
                free[layout.offset(a, j)] = false;
            }
        }
    }
    let free_idx: Vec<usize> = (0..layout.len()).filter(|&k| free[k]).collect();
    let (mut params, mut report) = joint_solve(ds, &alpha, &free_idx, &p, &config.lbfgs)?;
    let mut loss = report.final_loss();
    for _ in 0..config.refold_rounds {
        let mut candidate = params.clone();
        if refine_floats(ds, &alpha, &mut candidate, true) == 0 {
            break;
        }
        let refolded = evaluate(ds, &alpha, &candidate.pack(), None)?;
        if !(refolded < loss) {
            break;
        }
        let (next, more) = joint_solve(ds, &alpha, &free_idx, &candidate, &config.lbfgs)?;
        report.iterations += more.iterations;
        report.evaluations += more.evaluations;
        report.termination = more.termination;
        report.gradient_norm = more.gradient_norm;
        report.loss_history.extend(more.loss_history);
        params = next;
        loss = report.final_loss();
    }
    if !report.converged() {
        warnings.push(format!("optimizer stopped without converging ({:?})", report.termination));
    }

    let mut reflected = false;
    if gauge_ambiguous {
        warnings.push("fewer than three anchor priors: frame is only defined up to a rigid motion".into());
    } else if let Some(h) = hemisphere {
        let anchor = *anchor_index.get(&h.anchor).ok_or(CalibrationError::UnknownAnchor(h.anchor))?;
        let centres = [prior_idx[0].1, prior_idx[1].1, prior_idx[2].1];
        let (origin, normal) = prior_plane(&centres);
        let side = normal.dot(&(params.anchors[anchor] - origin));
        let wanted = match h.side {
            HemisphereSide::Above => 1.0,
            HemisphereSide::Below => -1.0,
        };
        if side * wanted < 0.0 {
            reflected = true;
            for (a, pos) in params.anchors.iter_mut().enumerate() {
                if !fixed.contains(&a) {
                    *pos = reflect(pos, &origin, &normal);
                }
            }
            for sample in &mut params.floats {
                for f in sample {
                    *f = reflect(f, &origin, &normal);
                }
            }
        }
    } else {
        warnings.push("no hemisphere constraint: solution may be mirrored through the prior plane".into());
    }

    let floats_all: Vec<Vector3<f64>> = params
        .floats
        .iter()
        .zip(&alpha)
        .flat_map(|(s, act)| s.iter().zip(act).filter(|(_, &a)| a).map(|(f, _)| *f))
        .collect();
    let sa = spread(&params.anchors);
    let sf = spread(&floats_all);
    if sa[2] < 1e-3 * sa[0].max(1e-12) && sf[2] < 1e-3 * sf[0].max(1e-12) {
        warnings.push("anchors and floats are both coplanar: geometry is rank deficient".into());
    }

    Ok(CalibrationResult {
        anchor_ids: ds.anchor_ids.clone(),
        float_ids: ds.float_ids.clone(),
        params,
        active: alpha,
        loss,
        report,
        gauge_ambiguous,
        reflected,
        warnings,
    })
}

/// L-BFGS over the free variables in Jacobi-scaled coordinates.
fn joint_solve(
    ds: &CalibrationDataset,
    alpha: &[Vec<bool>],
    free_idx: &[usize],
    p: &CalibrationParams,
    config: &LbfgsConfig,
) -> Result<(CalibrationParams, LbfgsReport), CalibrationError> {
    let x_full = p.pack();
    let scale = jacobi_scale(ds, alpha, &x_full, free_idx);
    let expand = |z: &DVector<f64>| {
        let mut x = x_full.clone();
        for (n, &k) in free_idx.iter().enumerate() {
            x[k] = z[n] * scale[n];
        }
        x
    };
    let objective = |z: &DVector<f64>| {
        let x = expand(z);
        let mut g = DVector::zeros(x.len());
        match evaluate(ds, alpha, &x, Some(&mut g)) {
            Ok(f) => (f, DVector::from_iterator(free_idx.len(), free_idx.iter().zip(&scale).map(|(&k, s)| g[k] * s))),
            Err(_) => (f64::NAN, DVector::zeros(free_idx.len())),
        }
    };
    let z0 = DVector::from_iterator(free_idx.len(), free_idx.iter().zip(&scale).map(|(&k, s)| x_full[k] / s));
    let (z, report) = minimize(objective, z0, config);
    Ok((CalibrationParams::unpack(ds, &expand(&z))?, report))
}

/// Linear least squares when possible, then Gauss-Newton; `hint` adds a
/// second start.
fn locate_point(centres: &[Vector3<f64>], ranges: &[f64], hint: Option<Vector3<f64>>) -> Vector3<f64> {
    let centroid = centres.iter().sum::<Vector3<f64>>() / centres.len() as f64;
    let mut starts = vec![linear_multilateration(centres, ranges).unwrap_or(centroid)];
    starts.extend(hint);
    starts
        .into_iter()
        .map(|s| multilaterate(centres, ranges, s, 30))
        .min_by(|a, b| range_cost(centres, ranges, a).total_cmp(&range_cost(centres, ranges, b)))
        .expect("at least one start")
}

/// Radius about the known anchors' centroid inside which floats are
/// plausible.
fn plausible_region(p: &CalibrationParams, known: &[bool]) -> (Vector3<f64>, f64) {
    let pts: Vec<&Vector3<f64>> = p.anchors.iter().zip(known).filter(|(_, &k)| k).map(|(a, _)| a).collect();
    let centroid = pts.iter().copied().sum::<Vector3<f64>>() / pts.len().max(1) as f64;
    let radius = pts.iter().map(|a| (*a - centroid).norm()).fold(0.0, f64::max);
    (centroid, 2.0 * radius.max(1.0))
}

/// Floats that landed far outside the anchor hull, or far from the rest of
/// their sample, are moved to the median of the sample's other floats.
fn reseat_outliers(ds: &CalibrationDataset, alpha: &[Vec<bool>], p: &mut CalibrationParams, known: &[bool]) {
    let (centre, radius) = plausible_region(p, known);
    let reach = if ds.bar_length > 0.0 { 2.0 * ds.bar_length } else { radius };
    for (t, floats) in p.floats.iter_mut().enumerate() {
        let inside: Vec<Vector3<f64>> = floats
            .iter()
            .zip(&alpha[t])
            .filter(|(f, &a)| a && f.iter().all(|v| v.is_finite()) && (*f - centre).norm() <= radius)
            .map(|(f, _)| *f)
            .collect();
        if inside.is_empty() {
            continue;
        }
        let median = Vector3::from_fn(|c, _| {
            let mut v: Vec<f64> = inside.iter().map(|f| f[c]).collect();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        });
        for (j, f) in floats.iter_mut().enumerate() {
            let bad = !f.iter().all(|v| v.is_finite()) || (*f - centre).norm() > radius || (*f - median).norm() > reach;
            if alpha[t][j] && bad {
                // off-centre so coincident floats keep a defined gradient
                *f = median + Vector3::new(0.01 * (j + 1) as f64, 0.0, 0.0);
            }
        }
    }
}

/// Positions an anchor from the initialised floats, trying starts on both
/// sides of the floats' best-fit plane.
fn locate_anchor(
    ds: &CalibrationDataset,
    alpha: &[Vec<bool>],
    p: &CalibrationParams,
    float_known: &[Vec<bool>],
    a: usize,
) -> Option<Vector3<f64>> {
    let mut centres = Vec::new();
    let mut ranges = Vec::new();
    for (t, s) in ds.samples.iter().enumerate() {
        for r in s.anchor_ranges.iter().filter(|r| r.anchor == a && alpha[t][r.float] && float_known[t][r.float]) {
            centres.push(p.floats[t][r.float]);
            ranges.push(r.raw);
        }
    }
    if centres.len() < 4 {
        return None;
    }
    let centroid = centres.iter().sum::<Vector3<f64>>() / centres.len() as f64;
    let mut m = nalgebra::Matrix3::zeros();
    for c in &centres {
        m += (c - centroid) * (c - centroid).transpose();
    }
    let eig = m.symmetric_eigen();
    let k = eig.eigenvalues.imin();
    let normal: Vector3<f64> = eig.eigenvectors.column(k).into();
    let mean_range = ranges.iter().sum::<f64>() / ranges.len() as f64;
    let lift = normal * (0.5 * mean_range);
    let mut starts = vec![centroid + lift, centroid - lift];
    starts.extend(linear_multilateration(&centres, &ranges));
    starts
        .into_iter()
        .map(|s| multilaterate(&centres, &ranges, s, 50))
        .min_by(|x, y| range_cost(&centres, &ranges, x).total_cmp(&range_cost(&centres, &ranges, y)))
}

fn estimate_offsets(ds: &CalibrationDataset, alpha: &[Vec<bool>], p: &mut CalibrationParams) {
    let (na, nf) = (ds.anchor_ids.len(), ds.float_ids.len());
    let mut sum = DMatrix::<f64>::zeros(na, nf);
    let mut count = DMatrix::<f64>::zeros(na, nf);
    for (t, s) in ds.samples.iter().enumerate() {
        for r in s.anchor_ranges.iter().filter(|r| alpha[t][r.float]) {
            sum[(r.anchor, r.float)] += (p.anchors[r.anchor] - p.floats[t][r.float]).norm() - r.raw;
            count[(r.anchor, r.float)] += 1.0;
        }
    }
    for a in 0..na {
        for j in 0..nf {
            if count[(a, j)] > 0.0 {
                p.offsets[(a, j)] = sum[(a, j)] / count[(a, j)];
            }
        }
    }
}

/// Per-float Gauss-Newton with starts spread along the anchors' thinnest
/// direction, where ranges from a near-planar constellation fold. With
/// `switch_only` a float moves only when another fold fits its ranges
/// clearly better. Returns the number of floats moved that way.
fn refine_floats(ds: &CalibrationDataset, alpha: &[Vec<bool>], p: &mut CalibrationParams, switch_only: bool) -> usize {
    let centroid = p.anchors.iter().sum::<Vector3<f64>>() / p.anchors.len().max(1) as f64;
    let mut m = nalgebra::Matrix3::zeros();
    for a in &p.anchors {
        m += (a - centroid) * (a - centroid).transpose();
    }
    let eig = m.symmetric_eigen();
    let normal: Vector3<f64> = eig.eigenvectors.column(eig.eigenvalues.imin()).into();
    let reach = 2.0 * FLOAT_STARTS.iter().fold(0.0, |m: f64, h| m.max(h.abs())) + ds.bar_length;
    let mut switched = 0;
    for (t, s) in ds.samples.iter().enumerate() {
        for j in 0..ds.float_ids.len() {
            if !alpha[t][j] {
                continue;
            }
            let (c, r): (Vec<_>, Vec<_>) = s
                .anchor_ranges
                .iter()
                .filter(|m| m.float == j)
                .map(|m| (p.anchors[m.anchor], m.raw + p.offsets[(m.anchor, j)]))
                .unzip();
            let current = p.floats[t][j];
            let best = FLOAT_STARTS
                .iter()
                .map(|&h| multilaterate(&c, &r, current + normal * h, 8))
                .filter(|x| (x - current).norm() <= reach)
                .min_by(|x, y| range_cost(&c, &r, x).total_cmp(&range_cost(&c, &r, y)))
                .unwrap_or(current);
            if !switch_only {
                p.floats[t][j] = best;
            } else if (best - current).norm() > 0.1 && range_cost(&c, &r, &best) < 0.5 * range_cost(&c, &r, &current) {
                p.floats[t][j] = best;
                switched += 1;
            }
        }
    }
    switched
}

const FLOAT_STARTS: [f64; 7] = [0.0, -0.75, 0.75, -1.5, 1.5, -2.5, 2.5];

fn refine_anchor(ds: &CalibrationDataset, alpha: &[Vec<bool>], p: &mut CalibrationParams, a: usize) {
    let mut c = Vec::new();
    let mut r = Vec::new();
    for (t, s) in ds.samples.iter().enumerate() {
        for m in s.anchor_ranges.iter().filter(|m| m.anchor == a && alpha[t][m.float]) {
            c.push(p.floats[t][m.float]);
            r.push(m.raw + p.offsets[(a, m.float)]);
        }
    }
    if c.len() >= 4 {
        let next = multilaterate(&c, &r, p.anchors[a], 10);
        if next.iter().all(|v| v.is_finite()) && range_cost(&c, &r, &next) <= range_cost(&c, &r, &p.anchors[a]) {
            p.anchors[a] = next;
        }
    }
}

/// Inverse square roots of the Gauss-Newton Hessian diagonal, per free
/// variable.
fn jacobi_scale(ds: &CalibrationDataset, alpha: &[Vec<bool>], x: &DVector<f64>, free_idx: &[usize]) -> Vec<f64> {
    let layout = Layout::of(ds);
    let mut diag = DVector::<f64>::zeros(x.len());
    let v3 = |k: usize| Vector3::new(x[k], x[k + 1], x[k + 2]);
    for (t, s) in ds.samples.iter().enumerate() {
        for r in s.anchor_ranges.iter().filter(|r| alpha[t][r.float]) {
            let (ka, kf) = (layout.anchor(r.anchor), layout.float(t, r.float));
            let d = v3(ka) - v3(kf);
            let u = d / d.norm().max(1e-12);
            for c in 0..3 {
                diag[ka + c] += 2.0 * u[c] * u[c];
                diag[kf + c] += 2.0 * u[c] * u[c];
            }
            diag[layout.offset(r.anchor, r.float)] += 2.0;
        }
        for &(a, b) in &ds.bars {
            if alpha[t][a] && alpha[t][b] {
                let (ka, kb) = (layout.float(t, a), layout.float(t, b));
                let d = v3(ka) - v3(kb);
                let u = d / d.norm().max(1e-12);
                for c in 0..3 {
                    diag[ka + c] += 2.0 * ds.bar_weight * u[c] * u[c];
                    diag[kb + c] += 2.0 * ds.bar_weight * u[c] * u[c];
                }
            }
        }
    }
    free_idx.iter().map(|&k| 1.0 / diag[k].max(1e-6).sqrt()).collect()
}

/// Offsets between float pairs in the ranging convention: mean of `raw -
/// |f_a - f_b|` over samples where both floats are active, both directions
/// pooled.
pub fn internal_offsets(
    result: &CalibrationResult,
    ds: &CalibrationDataset,
    min_samples: usize,
) -> Result<OffsetTable, CalibrationError> {
    let mut acc: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for (t, s) in ds.samples.iter().enumerate() {
        for r in &s.internal_ranges {
            let key = (r.a.min(r.b), r.a.max(r.b));
            let entry = acc.entry(key).or_insert((0.0, 0));
            if t < result.active.len() && result.active[t][r.a] && result.active[t][r.b] {
                let d = (result.params.floats[t][r.a] - result.params.floats[t][r.b]).norm();
                entry.0 += r.raw - d;
                entry.1 += 1;
            }
        }
    }
    let mut table = OffsetTable::default();
    for ((a, b), (sum, n)) in acc {
        let (ia, ib) = (ds.float_ids[a], ds.float_ids[b]);
        if n < min_samples.max(1) {
            return Err(CalibrationError::MissingPair { i: ia, j: ib, count: n, required: min_samples.max(1) });
        }
        table.set(ia, ib, sum / n as f64);
    }
    Ok(table)
}

//! Point-set helpers shared by calibration and filter initialization:
//! range-based positioning and rigid alignment.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Vector3};

/// Both intersections of three spheres, or `None` when the centres are
/// collinear. When the spheres do not meet the two points collapse onto the
/// centres' plane.
///
/// The first point lies on the side of `(c2 - c1) x (c3 - c1)`.
pub fn trilaterate(centres: [Vector3<f64>; 3], radii: [f64; 3]) -> Option<[Vector3<f64>; 2]> {
    let [p1, p2, p3] = centres;
    let ex = p2 - p1;
    let d = ex.norm();
    if d < 1e-12 {
        return None;
    }
    let ex = ex / d;
    let i = ex.dot(&(p3 - p1));
    let ey = p3 - p1 - ex * i;
    let ey_norm = ey.norm();
    if ey_norm < 1e-9 * d.max(1.0) {
        return None;
    }
    let ey = ey / ey_norm;
    let ez = ex.cross(&ey);
    let j = ey.dot(&(p3 - p1));
    let [r1, r2, r3] = radii;
    let x = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
    let y = (r1 * r1 - r3 * r3 + i * i + j * j) / (2.0 * j) - x * i / j;
    let h = (r1 * r1 - x * x - y * y).max(0.0).sqrt();
    let base = p1 + ex * x + ey * y;
    Some([base + ez * h, base - ez * h])
}

/// Gauss-Newton refinement of a point from ranges to known centres.
pub fn multilaterate(
    centres: &[Vector3<f64>],
    ranges: &[f64],
    initial: Vector3<f64>,
    iterations: usize,
) -> Vector3<f64> {
    let mut x = initial;
    for _ in 0..iterations {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (c, &r) in centres.iter().zip(ranges) {
            let diff = x - c;
            let dist = diff.norm();
            if dist < 1e-12 {
                continue;
            }
            let u = diff / dist;
            jtj += u * u.transpose();
            jtr += u * (dist - r);
        }
        // small Levenberg term keeps near-planar geometry solvable
        jtj += Matrix3::identity() * 1e-9 * (1.0 + jtj.trace());
        let Some(step) = jtj.lu().solve(&jtr) else { break };
        x -= step;
        if step.norm() < 1e-12 {
            break;
        }
    }
    x
}

/// Sum of squared range residuals of `x`.
pub fn range_cost(centres: &[Vector3<f64>], ranges: &[f64], x: &Vector3<f64>) -> f64 {
    centres.iter().zip(ranges).map(|(c, r)| ((x - c).norm() - r).powi(2)).sum()
}

/// Linear least-squares position from four or more ranges (differences of
/// squared-range equations against the first centre). `None` if the system
/// is rank deficient.
pub fn linear_multilateration(centres: &[Vector3<f64>], ranges: &[f64]) -> Option<Vector3<f64>> {
    if centres.len() < 4 || centres.len() != ranges.len() {
        return None;
    }
    let (c0, r0) = (centres[0], ranges[0]);
    let rows = centres.len() - 1;
    let mut a = DMatrix::zeros(rows, 3);
    let mut b = DVector::zeros(rows);
    for k in 1..centres.len() {
        let c = centres[k];
        let row = 2.0 * (c - c0);
        a.row_mut(k - 1).copy_from(&row.transpose());
        b[k - 1] = r0 * r0 - ranges[k] * ranges[k] + c.norm_squared() - c0.norm_squared();
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() < 1e-9 * smax.max(1e-300) {
        return None;
    }
    let x = svd.solve(&b, 0.0).ok()?;
    Some(Vector3::new(x[0], x[1], x[2]))
}

/// Rotation and translation minimising `sum |R p + t - q|^2` (Kabsch).
pub fn fit_rigid(from: &[Vector3<f64>], to: &[Vector3<f64>]) -> (Rotation3<f64>, Vector3<f64>) {
    let n = from.len().min(to.len()).max(1) as f64;
    let cf = from.iter().sum::<Vector3<f64>>() / n;
    let ct = to.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (p, q) in from.iter().zip(to) {
        h += (p - cf) * (q - ct).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let mut d = Matrix3::identity();
    if (v_t.transpose() * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = v_t.transpose() * d * u.transpose();
    let rot = Rotation3::from_matrix_unchecked(r);
    (rot, ct - rot * cf)
}

/// Singular values of the centred point cloud, largest first.
pub fn spread(points: &[Vector3<f64>]) -> Vector3<f64> {
    if points.is_empty() {
        return Vector3::zeros();
    }
    let c = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let mut m = Matrix3::zeros();
    for p in points {
        m += (p - c) * (p - c).transpose();
    }
    let mut s: Vec<f64> = m.symmetric_eigenvalues().iter().map(|v| v.max(0.0).sqrt()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Vector3::new(s[0], s[1], s[2])
}

//! Scaled unscented Kalman filter over the tensegrity state
//! `[positions | velocities]`.

mod filter;
mod measurement;

pub use filter::{run_filter, ControlSample, FilterRun, FilterStep};
pub use measurement::{
    bar_angles, initial_belief, AngleKind, AngleObservation, MeasurementBundle, MeasurementModel,
    RangeEnd, RangeObservation,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{Dynamics, DynamicsError, StateVector};
use crate::structure::GeometryError;

#[derive(Debug, Error)]
pub enum UkfError {
    #[error("invalid filter parameter `{name}` = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("covariance is not positive definite after conditioning")]
    CovarianceDegenerate,
    #[error("expected dimension {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("propagating sigma point {point} failed: {source}")]
    Predict { point: usize, source: DynamicsError },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("measurement names unknown {what} {id}")]
    UnknownId { what: &'static str, id: usize },
    #[error("{stream} stream goes back in time: {time} after {previous}")]
    Stream { stream: &'static str, time: f64, previous: f64 },
    #[error("cannot initialise belief: {0}")]
    Initialization(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    /// Additive state noise variance per step.
    pub state_noise: f64,
    /// Separate variance for the velocity half of the state; `state_noise`
    /// applies to everything when absent.
    pub velocity_noise: Option<f64>,
    /// Bar angle variance (rad²).
    pub angle_noise: f64,
    /// Range variance (m²).
    pub range_noise: f64,
    /// Diagonal loading tried when a covariance fails to factor.
    pub jitter: f64,
    /// Bars steeper than this (degrees) report no roll.
    pub gimbal_limit_deg: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        Self {
            alpha: 0.0139,
            beta: 2.0,
            kappa: 0.0,
            state_noise: 0.4,
            velocity_noise: None,
            angle_noise: 0.1,
            range_noise: 0.029,
            jitter: 1e-9,
            gimbal_limit_deg: 85.0,
        }
    }
}

impl UkfParams {
    pub fn validate(&self) -> Result<(), UkfError> {
        let bad = |name, value| Err(UkfError::InvalidParameter { name, value });
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha", self.alpha);
        }
        if !(self.kappa >= 0.0) {
            return bad("kappa", self.kappa);
        }
        if !self.beta.is_finite() {
            return bad("beta", self.beta);
        }
        for (name, v) in [
            ("state_noise", self.state_noise),
            ("angle_noise", self.angle_noise),
            ("range_noise", self.range_noise),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, v);
            }
        }
        if let Some(v) = self.velocity_noise {
            if !(v > 0.0 && v.is_finite()) {
                return bad("velocity_noise", v);
            }
        }
        if !(self.jitter >= 0.0) {
            return bad("jitter", self.jitter);
        }
        Ok(())
    }

    fn lambda(&self, dim: usize) -> f64 {
        let l = dim as f64;
        self.alpha * self.alpha * (l + self.kappa) - l
    }

    /// Diagonal of `R` for a state of dimension `dim`.
    pub fn process_noise(&self, dim: usize) -> DVector<f64> {
        match self.velocity_noise {
            Some(v) => DVector::from_fn(dim, |i, _| if i < dim / 2 { self.state_noise } else { v }),
            None => DVector::from_element(dim, self.state_noise),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Belief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, UkfError> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(UkfError::Dimension { expected: n, actual: cov.nrows() });
        }
        Ok(Self { mean, cov })
    }

    pub fn isotropic(mean: DVector<f64>, variance: f64) -> Self {
        let n = mean.len();
        Self { mean, cov: DMatrix::identity(n, n) * variance }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn trace(&self) -> f64 {
        self.cov.trace()
    }

    /// Trace of the position block (first half of the state).
    pub fn position_trace(&self) -> f64 {
        (0..self.dim() / 2).map(|i| self.cov[(i, i)]).sum()
    }

    pub fn asymmetry(&self) -> f64 {
        (&self.cov - self.cov.transpose()).abs().max()
    }

    fn symmetrize(&mut self) {
        let t = self.cov.transpose();
        self.cov = (&self.cov + t) * 0.5;
    }

    pub fn node_position(&self, node: usize) -> nalgebra::Vector3<f64> {
        nalgebra::Vector3::new(self.mean[3 * node], self.mean[3 * node + 1], self.mean[3 * node + 2])
    }
}

/// `2L + 1` points with Wan / van der Merwe weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPoints {
    pub points: Vec<DVector<f64>>,
    pub mean_weights: Vec<f64>,
    pub cov_weights: Vec<f64>,
}

impl SigmaPoints {
    /// Extra weight on the centre point's covariance term, `1 - α² + β`.
    fn centre_excess(&self) -> f64 {
        self.cov_weights[0] - self.mean_weights[0]
    }
}

fn factor(cov: &DMatrix<f64>, jitter: f64) -> Result<DMatrix<f64>, UkfError> {
    if let Some(c) = cov.clone().cholesky() {
        return Ok(c.l());
    }
    let n = cov.nrows();
    (cov + DMatrix::identity(n, n) * jitter.max(f64::EPSILON))
        .cholesky()
        .map(|c| c.l())
        .ok_or(UkfError::CovarianceDegenerate)
}

pub fn sigma_points(belief: &Belief, params: &UkfParams) -> Result<SigmaPoints, UkfError> {
    params.validate()?;
    let l = belief.dim();
    let lambda = params.lambda(l);
    let spread = l as f64 + lambda;
    let root = factor(&belief.cov, params.jitter)? * spread.sqrt();
    let mut points = Vec::with_capacity(2 * l + 1);
    points.push(belief.mean.clone());
    for i in 0..l {
        points.push(&belief.mean + root.column(i));
    }
    for i in 0..l {
        points.push(&belief.mean - root.column(i));
    }
    let w = 0.5 / spread;
    let mut mean_weights = vec![w; 2 * l + 1];
    let mut cov_weights = vec![w; 2 * l + 1];
    mean_weights[0] = lambda / spread;
    cov_weights[0] = lambda / spread + 1.0 - params.alpha * params.alpha + params.beta;
    Ok(SigmaPoints { points, mean_weights, cov_weights })
}

fn wrap_angle(a: f64) -> f64 {
    let r = (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    if r == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        r
    }
}

fn wrap_masked(v: &mut DVector<f64>, angular: &[bool]) {
    for (x, &a) in v.iter_mut().zip(angular) {
        if a {
            *x = wrap_angle(*x);
        }
    }
}

/// Deviations of each transformed point from the transformed centre point.
/// Recombining around the centre keeps the large negative centre weight
/// from cancelling catastrophically.
struct Spread {
    deviations: Vec<DVector<f64>>,
    mean_shift: DVector<f64>,
}

fn spread_of(points: &[DVector<f64>], sp: &SigmaPoints, angular: &[bool]) -> Spread {
    let centre = &points[0];
    let mut mean_shift = DVector::zeros(centre.len());
    let deviations: Vec<DVector<f64>> = points
        .iter()
        .zip(&sp.mean_weights)
        .map(|(p, &w)| {
            let mut d = p - centre;
            wrap_masked(&mut d, angular);
            mean_shift.axpy(w, &d, 1.0);
            d
        })
        .collect();
    Spread { deviations, mean_shift }
}

fn cross_cov(a: &Spread, b: &Spread, sp: &SigmaPoints) -> DMatrix<f64> {
    // the mean-shift outer product carries weight β - α²
    let mut c = &a.mean_shift * b.mean_shift.transpose() * (sp.centre_excess() - 1.0);
    for ((da, db), &w) in a.deviations.iter().zip(&b.deviations).zip(&sp.cov_weights).skip(1) {
        c.ger(w, da, db, 1.0);
    }
    c
}

/// Mean and covariance of `f` applied to the sigma points of `belief`.
pub fn unscented_transform<F>(
    belief: &Belief,
    params: &UkfParams,
    mut f: F,
) -> Result<(DVector<f64>, DMatrix<f64>), UkfError>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let sp = sigma_points(belief, params)?;
    let mapped: Vec<DVector<f64>> = sp.points.iter().map(&mut f).collect();
    let s = spread_of(&mapped, &sp, &[]);
    let cov = cross_cov(&s, &s, &sp);
    Ok((&mapped[0] + &s.mean_shift, cov))
}

/// Maps a set of states across one filter interval.
pub trait ProcessModel {
    fn propagate(&self, points: &[DVector<f64>], dt: f64) -> Result<Vec<DVector<f64>>, UkfError>;
}

/// Identity dynamics.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrozenProcess;

impl ProcessModel for FrozenProcess {
    fn propagate(&self, points: &[DVector<f64>], _dt: f64) -> Result<Vec<DVector<f64>>, UkfError> {
        Ok(points.to_vec())
    }
}

/// Per-point closure `f(x, dt)`.
pub struct FnProcess<F>(pub F);

impl<F> ProcessModel for FnProcess<F>
where
    F: Fn(&DVector<f64>, f64) -> DVector<f64>,
{
    fn propagate(&self, points: &[DVector<f64>], dt: f64) -> Result<Vec<DVector<f64>>, UkfError> {
        Ok(points.iter().map(|p| (self.0)(p, dt)).collect())
    }
}

/// The tensegrity dynamics with actuated rest lengths moving linearly from
/// `from` to `to` over the interval.
pub struct TensegrityProcess<'a> {
    pub dynamics: &'a Dynamics,
    pub from: &'a [f64],
    pub to: &'a [f64],
}

impl ProcessModel for TensegrityProcess<'_> {
    fn propagate(&self, points: &[DVector<f64>], dt: f64) -> Result<Vec<DVector<f64>>, UkfError> {
        let states: Vec<StateVector> = points.iter().map(|p| StateVector(p.clone())).collect();
        let out = self.dynamics.propagate_batch(&states, self.from, self.to, dt).map_err(|e| match e {
            DynamicsError::Divergence { block: Some(point) } => {
                UkfError::Predict { point, source: DynamicsError::Divergence { block: None } }
            }
            other => UkfError::Dynamics(other),
        })?;
        Ok(out.into_iter().map(|s| s.0).collect())
    }
}

/// Time update: sigma points through `process`, recombined, plus `R`.
pub fn predict<P: ProcessModel + ?Sized>(
    belief: &Belief,
    process: &P,
    dt: f64,
    params: &UkfParams,
) -> Result<Belief, UkfError> {
    let sp = sigma_points(belief, params)?;
    let moved = process.propagate(&sp.points, dt)?;
    let l = belief.dim();
    if let Some(p) = moved.iter().position(|p| p.len() != l) {
        return Err(UkfError::Dimension { expected: l, actual: moved[p].len() });
    }
    let s = spread_of(&moved, &sp, &[]);
    let mut cov = cross_cov(&s, &s, &sp);
    for (i, r) in params.process_noise(l).iter().enumerate() {
        cov[(i, i)] += r;
    }
    let mut out = Belief { mean: &moved[0] + &s.mean_shift, cov };
    out.symmetrize();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub belief: Belief,
    /// Euclidean norm of the (wrapped) innovation; zero for empty updates.
    pub innovation_norm: f64,
    /// Normalized innovation squared.
    pub nis: f64,
    /// Set when the update was skipped.
    pub warning: Option<String>,
}

/// Measurement update against `measured` with diagonal noise `noise`.
/// Components flagged in `angular` are compared modulo 2π.
pub fn update<H>(
    prior: &Belief,
    measured: &DVector<f64>,
    noise: &DVector<f64>,
    angular: &[bool],
    params: &UkfParams,
    mut h: H,
) -> Result<UpdateOutcome, UkfError>
where
    H: FnMut(&DVector<f64>) -> Result<DVector<f64>, UkfError>,
{
    let m = measured.len();
    if noise.len() != m {
        return Err(UkfError::Dimension { expected: m, actual: noise.len() });
    }
    if m == 0 {
        return Ok(UpdateOutcome { belief: prior.clone(), innovation_norm: 0.0, nis: 0.0, warning: None });
    }
    let sp = sigma_points(prior, params)?;
    let predicted = sp.points.iter().map(&mut h).collect::<Result<Vec<_>, _>>()?;
    if let Some(p) = predicted.iter().find(|p| p.len() != m) {
        return Err(UkfError::Dimension { expected: m, actual: p.len() });
    }
    let sy = spread_of(&predicted, &sp, angular);
    let sx = spread_of(&sp.points, &sp, &[]);
    let mut s = cross_cov(&sy, &sy, &sp);
    for (i, q) in noise.iter().enumerate() {
        s[(i, i)] += q;
    }
    let pxy = cross_cov(&sx, &sy, &sp);
    let mut y_mean = &predicted[0] + &sy.mean_shift;
    wrap_masked(&mut y_mean, angular);
    let mut innovation = measured - &y_mean;
    wrap_masked(&mut innovation, angular);
    let skip = |why: &str| UpdateOutcome {
        belief: prior.clone(),
        innovation_norm: innovation.norm(),
        nis: f64::NAN,
        warning: Some(why.to_string()),
    };
    let Some(chol) = s.clone().cholesky() else {
        return Ok(skip("innovation covariance is not positive definite; update skipped"));
    };
    // K = Pxy S⁻¹, solved as S Kᵀ = Pxyᵀ
    let gain = chol.solve(&pxy.transpose()).transpose();
    if !gain.iter().all(|v| v.is_finite()) {
        return Ok(skip("non-finite Kalman gain; update skipped"));
    }
    let nis = innovation.dot(&chol.solve(&innovation));
    let mean = &prior.mean + &gain * &innovation;
    let cov = &prior.cov - &gain * &s * gain.transpose();
    let mut belief = Belief { mean, cov };
    belief.symmetrize();
    Ok(UpdateOutcome { belief, innovation_norm: innovation.norm(), nis, warning: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(alpha: f64, beta: f64, kappa: f64) -> UkfParams {
        UkfParams { alpha, beta, kappa, ..Default::default() }
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn one_dimensional_points_and_weights() {
        let b = Belief::new(DVector::from_element(1, 0.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let sp = sigma_points(&b, &params(1.0, 2.0, 0.0)).unwrap();
        let xs: Vec<f64> = sp.points.iter().map(|p| p[0]).collect();
        assert_eq!(xs, vec![0.0, 1.0, -1.0]);
        assert_eq!(sp.mean_weights, vec![0.0, 0.5, 0.5]);
        assert_relative_eq!(sp.cov_weights[0], 2.0);
    }

    #[test]
    fn filter_defaults_give_145_points() {
        let b = Belief::isotropic(DVector::zeros(72), 1.0);
        let sp = sigma_points(&b, &UkfParams::default()).unwrap();
        assert_eq!(sp.points.len(), 145);
        assert_relative_eq!(sp.mean_weights.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn rejects_bad_parameters() {
        for p in [
            params(0.0, 2.0, 0.0),
            params(1.5, 2.0, 0.0),
            params(0.5, 2.0, -1.0),
            UkfParams { range_noise: 0.0, ..Default::default() },
        ] {
            assert!(matches!(p.validate(), Err(UkfError::InvalidParameter { .. })));
        }
    }

    #[test]
    fn indefinite_covariance_is_reported() {
        let b = Belief::new(DVector::zeros(2), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).unwrap();
        assert!(matches!(sigma_points(&b, &UkfParams::default()), Err(UkfError::CovarianceDegenerate)));
    }

    #[test]
    fn affine_maps_are_exact_at_filter_defaults() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (n, m) in [(3, 2), (12, 12), (72, 20)] {
            let mean = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let b = Belief::new(mean.clone(), random_spd(n, &mut rng)).unwrap();
            let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            let c = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            let (ym, yc) = unscented_transform(&b, &UkfParams::default(), |x| &a * x + &c).unwrap();
            let want_mean = &a * &mean + &c;
            let want_cov = &a * &b.cov * a.transpose();
            assert!((ym - want_mean).amax() < 1e-10);
            assert!((yc - want_cov).amax() < 1e-10);
        }
    }

    #[test]
    fn frozen_predict_adds_process_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = Belief::new(DVector::from_element(6, 1.0), random_spd(6, &mut rng)).unwrap();
        let p = UkfParams::default();
        let out = predict(&b, &FrozenProcess, 0.1, &p).unwrap();
        assert!((&out.mean - &b.mean).amax() < 1e-10);
        let want = &b.cov + DMatrix::identity(6, 6) * 0.4;
        assert!((out.cov - want).amax() < 1e-10);
        let split = UkfParams { velocity_noise: Some(0.1), ..p };
        assert_eq!(split.process_noise(4).as_slice(), &[0.4, 0.4, 0.1, 0.1]);
    }

    #[test]
    fn empty_update_returns_prior() {
        let b = Belief::isotropic(DVector::from_element(4, 2.0), 0.3);
        let out = update(&b, &DVector::zeros(0), &DVector::zeros(0), &[], &UkfParams::default(), |_| {
            unreachable!()
        })
        .unwrap();
        assert_eq!(out.belief, b);
        assert!(out.warning.is_none());
    }

    #[test]
    fn scalar_tracking_matches_kalman_filter() {
        // x' = a x + w, z = h x + v
        let (a, h, r, q) = (0.95, 2.0, 0.4, 0.029);
        let p = UkfParams { state_noise: r, range_noise: q, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut ukf = Belief::isotropic(DVector::from_element(1, 0.5), 1.0);
        let (mut m, mut v) = (0.5, 1.0);
        let mut truth = 0.3;
        for _ in 0..100 {
            truth = a * truth + rng.random_range(-0.5..0.5);
            let z = h * truth + rng.random_range(-0.1..0.1);
            ukf = predict(&ukf, &FnProcess(|x: &DVector<f64>, _: f64| x * a), 0.1, &p).unwrap();
            let out = update(&ukf, &DVector::from_element(1, z), &DVector::from_element(1, q), &[false], &p, |x| {
                Ok(x * h)
            })
            .unwrap();
            ukf = out.belief;
            m *= a;
            v = a * a * v + r;
            let k = v * h / (h * h * v + q);
            m += k * (z - h * m);
            v *= 1.0 - k * h;
            assert!((ukf.mean[0] - m).abs() < 1e-8, "{} vs {m}", ukf.mean[0]);
            assert!((ukf.cov[(0, 0)] - v).abs() < 1e-8);
        }
    }

    #[test]
    fn angular_innovation_wraps() {
        let b = Belief::isotropic(DVector::from_element(1, 3.1), 1e-4);
        let p = UkfParams { angle_noise: 1e-4, ..Default::default() };
        let out = update(&b, &DVector::from_element(1, -3.1), &DVector::from_element(1, 1e-4), &[true], &p, |x| {
            Ok(x.map(wrap_angle))
        })
        .unwrap();
        // the short way round is +0.083 rad, half of it applied
        assert_relative_eq!(out.belief.mean[0], 3.1 + 0.5 * (std::f64::consts::TAU - 6.2), epsilon = 1e-6);
        assert!(out.innovation_norm < 0.1);
    }

    #[test]
    fn singular_innovation_skips_update() {
        let b = Belief::isotropic(DVector::from_element(2, 0.0), 1.0);
        let p = UkfParams::default();
        let out = update(&b, &DVector::from_element(1, 1.0), &DVector::from_element(1, -5.0), &[false], &p, |x| {
            Ok(DVector::from_element(1, x[0]))
        })
        .unwrap();
        assert_eq!(out.belief, b);
        assert!(out.warning.is_some());
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(std::f64::consts::PI), std::f64::consts::PI);
        assert_eq!(wrap_angle(-std::f64::consts::PI), std::f64::consts::PI);
        assert_relative_eq!(wrap_angle(7.0), 7.0 - std::f64::consts::TAU);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn mean_weights_sum_to_one(alpha in 0.001f64..=1.0, beta in 0.0f64..4.0, kappa in 0.0f64..5.0, n in 1usize..30) {
            let b = Belief::isotropic(DVector::zeros(n), 1.0);
            let sp = sigma_points(&b, &params(alpha, beta, kappa)).unwrap();
            prop_assert_eq!(sp.points.len(), 2 * n + 1);
            prop_assert!((sp.mean_weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn affine_exactness(seed in any::<u64>(), n in 1usize..10, m in 1usize..6, alpha in 0.01f64..=1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mean = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let b = Belief::new(mean.clone(), random_spd(n, &mut rng)).unwrap();
            let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            let c = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            let (ym, yc) = unscented_transform(&b, &params(alpha, 2.0, 0.0), |x| &a * x + &c).unwrap();
            prop_assert!((ym - (&a * &mean + &c)).amax() < 1e-10);
            prop_assert!((yc - &a * &b.cov * a.transpose()).amax() < 1e-10);
        }

        #[test]
        fn posterior_is_symmetric(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = Belief::new(DVector::zeros(6), random_spd(6, &mut rng)).unwrap();
            let hm = DMatrix::from_fn(3, 6, |_, _| rng.random_range(-1.0..1.0));
            let z = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let out = update(&b, &z, &DVector::from_element(3, 0.029), &[false; 3], &UkfParams::default(), |x| Ok(&hm * x)).unwrap();
            prop_assert!(out.belief.asymmetry() < 1e-9);
            prop_assert!(out.belief.cov.clone().cholesky().is_some());
        }
    }
}

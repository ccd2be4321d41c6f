//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbfgsConfig {
    /// Number of correction pairs kept.
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the infinity norm of the gradient falls below this.
    pub gradient_tolerance: f64,
    /// Stop when the relative decrease over one iteration falls below this.
    pub function_tolerance: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 12,
            max_iterations: 2000,
            gradient_tolerance: 1e-8,
            function_tolerance: 1e-15,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    FunctionChange,
    MaxIterations,
    LineSearchFailed,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbfgsReport {
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Loss after every accepted iterate, starting with the initial point.
    pub loss_history: Vec<f64>,
    pub gradient_norm: f64,
}

impl LbfgsReport {
    pub fn converged(&self) -> bool {
        matches!(self.termination, Termination::Gradient | Termination::FunctionChange)
    }

    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().unwrap_or(&f64::NAN)
    }
}

/// Minimises `f`, which returns the value and gradient at a point.
pub fn minimize(
    mut f: impl FnMut(&DVector<f64>) -> (f64, DVector<f64>),
    x0: DVector<f64>,
    config: &LbfgsConfig,
) -> (DVector<f64>, LbfgsReport) {
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut evaluations = 1;
    let mut history = vec![fx];
    let mut pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new();
    let finish = |x, termination, iterations, evaluations, history, g: &DVector<f64>| {
        let report = LbfgsReport {
            iterations,
            evaluations,
            termination,
            loss_history: history,
            gradient_norm: g.amax(),
        };
        (x, report)
    };
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return finish(x, Termination::NonFinite, 0, evaluations, history, &g);
    }

    for iter in 0..config.max_iterations {
        if g.amax() <= config.gradient_tolerance {
            return finish(x, Termination::Gradient, iter, evaluations, history, &g);
        }
        let mut d = two_loop(&g, &pairs);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            pairs.clear();
            d = -&g;
            slope = g.dot(&d);
        }
        let alpha0 = if pairs.is_empty() { (1.0 / g.norm()).min(1.0) } else { 1.0 };
        let Some(ls) = line_search(&mut f, &x, fx, slope, &d, alpha0, config) else {
            if !pairs.is_empty() {
                pairs.clear();
                continue;
            }
            return finish(x, Termination::LineSearchFailed, iter, evaluations, history, &g);
        };
        evaluations += ls.evaluations;
        let s = &d * ls.alpha;
        let y = &ls.g - &g;
        let sy = s.dot(&y);
        let prev = fx;
        x += &s;
        fx = ls.f;
        g = ls.g;
        history.push(fx);
        if sy > 1e-12 * s.norm() * y.norm() {
            if pairs.len() == config.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        if (prev - fx).abs() <= config.function_tolerance * prev.abs().max(fx.abs()).max(1e-300) {
            return finish(x, Termination::FunctionChange, iter + 1, evaluations, history, &g);
        }
    }
    let n = config.max_iterations;
    finish(x, Termination::MaxIterations, n, evaluations, history, &g)
}

fn two_loop(g: &DVector<f64>, pairs: &VecDeque<(DVector<f64>, DVector<f64>, f64)>) -> DVector<f64> {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * s.dot(&q);
        q.axpy(-a, y, 1.0);
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        q *= s.dot(y) / y.dot(y);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * y.dot(&q);
        q.axpy(a - b, s, 1.0);
    }
    -q
}

struct LineSearchResult {
    alpha: f64,
    f: f64,
    g: DVector<f64>,
    evaluations: usize,
}

struct Trial {
    alpha: f64,
    f: f64,
    slope: f64,
    g: DVector<f64>,
}

fn line_search(
    f: &mut impl FnMut(&DVector<f64>) -> (f64, DVector<f64>),
    x: &DVector<f64>,
    f0: f64,
    slope0: f64,
    d: &DVector<f64>,
    alpha0: f64,
    config: &LbfgsConfig,
) -> Option<LineSearchResult> {
    let mut evaluations = 0;
    let mut eval = |alpha: f64, evaluations: &mut usize| {
        *evaluations += 1;
        let (fa, ga) = f(&(x + d * alpha));
        let slope = ga.dot(d);
        Trial { alpha, f: fa, slope, g: ga }
    };
    let armijo = |t: &Trial| t.f.is_finite() && t.f <= f0 + config.c1 * t.alpha * slope0;
    let curvature = |t: &Trial| t.slope.abs() <= -config.c2 * slope0;

    let mut lo = Trial { alpha: 0.0, f: f0, slope: slope0, g: DVector::zeros(0) };
    let mut alpha = alpha0;
    let mut hi: Option<Trial> = None;
    for _ in 0..config.max_line_search {
        let t = eval(alpha, &mut evaluations);
        if !armijo(&t) || (lo.alpha > 0.0 && t.f >= lo.f) {
            hi = Some(t);
            break;
        }
        if curvature(&t) {
            return Some(LineSearchResult { alpha: t.alpha, f: t.f, g: t.g, evaluations });
        }
        if t.slope >= 0.0 {
            hi = Some(lo);
            lo = t;
            break;
        }
        lo = t;
        alpha *= 2.0;
    }
    let mut hi = hi?;

    for _ in 0..config.max_line_search {
        let trial_alpha = interpolate(&lo, &hi);
        let t = eval(trial_alpha, &mut evaluations);
        if !armijo(&t) || t.f >= lo.f {
            hi = t;
        } else {
            if curvature(&t) {
                return Some(LineSearchResult { alpha: t.alpha, f: t.f, g: t.g, evaluations });
            }
            if t.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = t;
        }
        if (hi.alpha - lo.alpha).abs() < 1e-16 * lo.alpha.abs().max(1e-16) {
            break;
        }
    }
    // accept the best sufficient-decrease point found
    (lo.alpha > 0.0).then(|| LineSearchResult { alpha: lo.alpha, f: lo.f, g: lo.g, evaluations })
}

/// Minimiser of the quadratic through `lo` (value and slope) and `hi`
/// (value), safeguarded into the inner part of the bracket.
fn interpolate(lo: &Trial, hi: &Trial) -> f64 {
    let h = hi.alpha - lo.alpha;
    let denom = 2.0 * (hi.f - lo.f - lo.slope * h);
    let mut a = if denom.is_finite() && denom > 0.0 { lo.alpha - lo.slope * h * h / denom } else { f64::NAN };
    let (min, max) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
    let margin = 0.1 * (max - min);
    if !a.is_finite() || a < min + margin || a > max - margin {
        a = 0.5 * (lo.alpha + hi.alpha);
    }
    a
}

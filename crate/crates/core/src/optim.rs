//! BFGS with a strong-Wolfe line search.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when `‖∇f‖_∞` falls below this.
    pub grad_tol: f64,
    /// Stop when [`STALL_STEPS`] accepted steps in a row each change `f` by
    /// less than this, relative to `|f|`.
    pub f_rel_tol: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-6,
            f_rel_tol: 1e-10,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

/// Consecutive small-change steps needed for the objective stopping rule.
pub const STALL_STEPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    ObjectiveTolerance,
    MaxIterations,
    LineSearchFailed,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

impl Minimum {
    pub fn converged(&self) -> bool {
        matches!(self.termination, Termination::GradientTolerance | Termination::ObjectiveTolerance)
    }

    pub fn grad_norm(&self) -> f64 {
        inf_norm(&self.grad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

struct Probe {
    alpha: f64,
    f: f64,
    slope: f64,
    x: Vec<f64>,
    grad: Vec<f64>,
}

/// Minimize `objective`, which returns the value and gradient at a point.
pub fn minimize<F>(mut objective: F, x0: &[f64], opts: &BfgsOptions) -> Minimum
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let d = x0.len();
    let mut x = x0.to_vec();
    let (mut f, mut g) = objective(&x);
    let mut evaluations = 1;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Minimum { x, f, grad: g, iterations: 0, evaluations, termination: Termination::NonFinite };
    }
    let mut h = identity(d);
    let mut h_is_identity = true;
    let mut first = true;
    let mut stalled = 0;

    for iter in 0..opts.max_iter {
        if inf_norm(&g) <= opts.grad_tol {
            return Minimum { x, f, grad: g, iterations: iter, evaluations, termination: Termination::GradientTolerance };
        }
        let mut dir = mat_vec_neg(&h, &g, d);
        if dot(&dir, &g) >= 0.0 {
            h = identity(d);
            h_is_identity = true;
            dir = g.iter().map(|v| -v).collect();
        }
        let alpha0 = if first { 1.0 / inf_norm(&g).max(1.0) } else { 1.0 };

        let mut probe = line_search(&mut objective, &x, f, &g, &dir, alpha0, opts, &mut evaluations);
        if probe.is_none() && !h_is_identity {
            h = identity(d);
            h_is_identity = true;
            dir = g.iter().map(|v| -v).collect();
            let alpha0 = 1.0 / inf_norm(&g).max(1.0);
            probe = line_search(&mut objective, &x, f, &g, &dir, alpha0, opts, &mut evaluations);
        }
        let Some(probe) = probe else {
            return Minimum { x, f, grad: g, iterations: iter, evaluations, termination: Termination::LineSearchFailed };
        };

        let s: Vec<f64> = probe.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = probe.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        let f_prev = f;
        x = probe.x;
        f = probe.f;
        g = probe.grad;

        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if first {
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
            }
            bfgs_update(&mut h, &s, &y, sy, d);
            h_is_identity = false;
        }
        first = false;

        if (f_prev - f).abs() <= opts.f_rel_tol * f.abs().max(f64::MIN_POSITIVE) {
            stalled += 1;
        } else {
            stalled = 0;
        }
        if stalled >= STALL_STEPS {
            let termination = if inf_norm(&g) <= opts.grad_tol {
                Termination::GradientTolerance
            } else {
                Termination::ObjectiveTolerance
            };
            return Minimum { x, f, grad: g, iterations: iter + 1, evaluations, termination };
        }
    }
    let termination = if inf_norm(&g) <= opts.grad_tol {
        Termination::GradientTolerance
    } else {
        Termination::MaxIterations
    };
    Minimum { x, f, grad: g, iterations: opts.max_iter, evaluations, termination }
}

fn identity(d: usize) -> Vec<f64> {
    let mut h = vec![0.0; d * d];
    for i in 0..d {
        h[i * d + i] = 1.0;
    }
    h
}

fn mat_vec_neg(h: &[f64], g: &[f64], d: usize) -> Vec<f64> {
    (0..d).map(|i| -dot(&h[i * d..(i + 1) * d], g)).collect()
}

/// `H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, d: usize) {
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..d).map(|i| dot(&h[i * d..(i + 1) * d], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..d {
        for j in 0..d {
            h[i * d + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn line_search<F>(
    objective: &mut F,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    dir: &[f64],
    alpha0: f64,
    opts: &BfgsOptions,
    evaluations: &mut usize,
) -> Option<Probe>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let slope0 = dot(g0, dir);
    let mut eval = |alpha: f64| -> Probe {
        let xa: Vec<f64> = x.iter().zip(dir).map(|(a, b)| a + alpha * b).collect();
        let (fa, ga) = objective(&xa);
        *evaluations += 1;
        let finite = fa.is_finite() && ga.iter().all(|v| v.is_finite());
        let (fa, slope) = if finite { (fa, dot(&ga, dir)) } else { (f64::INFINITY, f64::NAN) };
        Probe { alpha, f: fa, slope, x: xa, grad: ga }
    };
    let armijo = |p: &Probe| p.f <= f0 + opts.c1 * p.alpha * slope0;
    let curvature = |p: &Probe| p.slope.abs() <= -opts.c2 * slope0;

    let mut prev = Probe { alpha: 0.0, f: f0, slope: slope0, x: x.to_vec(), grad: g0.to_vec() };
    let mut alpha = alpha0;
    let mut budget = opts.max_line_search;
    let mut best: Option<Probe> = None;

    let bracket = loop {
        if budget == 0 {
            return best;
        }
        budget -= 1;
        let cur = eval(alpha);
        if !cur.f.is_finite() {
            // shrink toward the last good point
            alpha = prev.alpha + 0.25 * (alpha - prev.alpha);
            continue;
        }
        if !armijo(&cur) || (prev.alpha > 0.0 && cur.f >= prev.f) {
            break (prev, cur);
        }
        if curvature(&cur) {
            return Some(cur);
        }
        if cur.slope >= 0.0 {
            break (cur, prev);
        }
        alpha = 2.0 * cur.alpha;
        if best.as_ref().is_none_or(|b| cur.f < b.f) {
            best = Some(Probe { x: cur.x.clone(), grad: cur.grad.clone(), ..cur });
        }
        prev = cur;
    };

    let (mut lo, mut hi) = bracket;
    while budget > 0 {
        budget -= 1;
        let a = interpolate(&lo, &hi);
        let cur = eval(a);
        if !cur.f.is_finite() || !armijo(&cur) || cur.f >= lo.f {
            hi = cur;
        } else {
            if curvature(&cur) {
                return Some(cur);
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
        if (hi.alpha - lo.alpha).abs() <= 1e-16 * lo.alpha.abs().max(1e-16) {
            break;
        }
    }
    // accept a point with sufficient decrease even without the curvature condition
    if lo.alpha > 0.0 && armijo(&lo) && lo.f < f0 {
        return Some(lo);
    }
    best.filter(|b| b.f < f0)
}

/// Cubic interpolation between two probes, safeguarded into the middle 80%.
fn interpolate(lo: &Probe, hi: &Probe) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let width = b - a;
    let lo_bound = a.min(b) + 0.1 * width.abs();
    let hi_bound = a.max(b) - 0.1 * width.abs();
    let bisect = 0.5 * (a + b);
    if !(hi.f.is_finite() && hi.slope.is_finite()) {
        return bisect;
    }
    let d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if disc < 0.0 {
        return bisect;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    if t.is_finite() && t >= lo_bound && t <= hi_bound {
        t
    } else {
        bisect
    }
}

/// Central finite-difference Hessian from a gradient, symmetrized.
///
/// Step for coordinate `i` is `rel_step · (1 + |z_i|)`.
pub fn hessian_from_grad<G>(mut grad: G, z: &[f64], rel_step: f64) -> Vec<f64>
where
    G: FnMut(&[f64]) -> Vec<f64>,
{
    let d = z.len();
    let mut h = vec![0.0; d * d];
    let mut zp = z.to_vec();
    for j in 0..d {
        let step = rel_step * (1.0 + z[j].abs());
        zp[j] = z[j] + step;
        let gp = grad(&zp);
        zp[j] = z[j] - step;
        let gm = grad(&zp);
        zp[j] = z[j];
        for i in 0..d {
            h[i * d + j] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (h[i * d + j] + h[j * d + i]);
            h[i * d + j] = avg;
            h[j * d + i] = avg;
        }
    }
    h
}

//! Scalar root finding on a bracket.

use crate::error::{Error, Result};

/// Plain bisection of `f` on `[lo, hi]` until the bracket is narrower than `xtol`.
///
/// `f(lo)` and `f(hi)` must differ in sign (a zero at either end is returned directly).
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, xtol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if !(flo.is_finite() && fhi.is_finite()) {
        return Err(Error::Numerical("non-finite value at bracket end".into()));
    }
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Numerical(format!(
            "no sign change on [{lo}, {hi}]"
        )));
    }
    while hi - lo > xtol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if !fm.is_finite() {
            return Err(Error::Numerical(format!("non-finite value at {mid}")));
        }
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Solve `g(t) = target` for nondecreasing `g` on `[lo, hi]`.
///
/// Bisects until the bracket is narrower than `switch_width`, then takes Newton
/// steps with `dg`, falling back to bisection whenever a step leaves the
/// bracket or the derivative vanishes. Stops when `|g(t) - target| <= tol`,
/// after one last guarded Newton correction so `t` is also accurate where `dg`
/// is small.
pub fn monotone_solve<G, D>(
    g: G,
    dg: D,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    switch_width: f64,
    tol: f64,
) -> Result<f64>
where
    G: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let resid = |t: f64| g(t) - target;
    let polish = |t: f64, r: f64, lo: f64, hi: f64| {
        let d = dg(t);
        let next = t - r / d;
        if d > 0.0 && next >= lo && next <= hi && resid(next).abs() <= r.abs() {
            next
        } else {
            t
        }
    };
    let rlo = resid(lo);
    let rhi = resid(hi);
    if !(rlo.is_finite() && rhi.is_finite()) {
        return Err(Error::Numerical("non-finite value at bracket end".into()));
    }
    if rlo.abs() <= tol {
        return Ok(lo);
    }
    if rhi.abs() <= tol {
        return Ok(hi);
    }
    if rlo > 0.0 || rhi < 0.0 {
        return Err(Error::Numerical(format!(
            "target {target} not bracketed on [{lo}, {hi}]"
        )));
    }

    while hi - lo > switch_width {
        let mid = 0.5 * (lo + hi);
        let r = resid(mid);
        if !r.is_finite() {
            return Err(Error::Numerical(format!("non-finite value at {mid}")));
        }
        if r.abs() <= tol {
            return Ok(polish(mid, r, lo, hi));
        }
        if r < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = resid(t);
        if !r.is_finite() {
            return Err(Error::Numerical(format!("non-finite value at {t}")));
        }
        if r.abs() <= tol {
            return Ok(polish(t, r, lo, hi));
        }
        if r < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let d = dg(t);
        let newton = t - r / d;
        t = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            return Ok(t);
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_cos_root() {
        let r = bisect(f64::cos, 1.0, 2.0, 1e-14).unwrap();
        assert!((r - std::f64::consts::FRAC_PI_2).abs() < 1e-13);
    }

    #[test]
    fn bisect_rejects_missing_sign_change() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-10).is_err());
    }

    #[test]
    fn monotone_solve_cubic() {
        let t = monotone_solve(|x| x * x * x, |x| 3.0 * x * x, 0.125, 0.0, 1.0, 1e-3, 1e-14).unwrap();
        assert!((t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn monotone_solve_flat_derivative_falls_back() {
        // derivative vanishes at the solution
        let t = monotone_solve(|x| (x - 0.3).powi(3), |x| 3.0 * (x - 0.3).powi(2), 0.0, 0.0, 1.0, 1e-3, 1e-15)
            .unwrap();
        assert!((t - 0.3).abs() < 1e-4);
    }
}

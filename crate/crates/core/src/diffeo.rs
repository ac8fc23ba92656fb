//! Diffeomorphisms of `[0, 1]` from a truncated cosine basis.
//!
//! A coefficient vector `β` with `‖β‖ < π` defines the tangent vector
//! `v_β(t) = Σ_j β_j √2 cos(jπt)`, which the exponential map sends to
//! `q = cos‖β‖ + sin‖β‖/‖β‖ · v_β` on the unit Hilbert sphere. The warp is
//! `γ_β(t) = ∫₀ᵗ q²`, and with the cosine basis everything has a closed form:
//!
//! ```text
//! γ_β(t) = cos²(r)·t + 2·sinc(2r)·∫₀ᵗ v_β + sinc²(r)·∫₀ᵗ v_β²,   r = ‖β‖
//! ```
//!
//! The `‖β‖`-dependent factors are evaluated as even functions of `r` so that
//! values and gradients stay smooth through `β = 0`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::roots::monotone_solve;

/// Below this norm the `sin(r)/r` style ratios switch to their Taylor series.
pub const SMALL_NORM: f64 = 1e-6;

/// Default absolute tolerance for [`Warp::inverse`].
pub const INVERSE_TOL: f64 = 1e-10;

/// Bracket width at which [`Warp::inverse`] switches from bisection to Newton.
const INVERSE_SWITCH_WIDTH: f64 = 1e-3;

/// Warp coefficients `β ∈ R^p` with `‖β‖ < π`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisCoefficients {
    beta: Vec<f64>,
    norm: f64,
}

impl BasisCoefficients {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::InvalidArgument("basis dimension must be at least 1".into()));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidArgument("non-finite warp coefficient".into()));
        }
        let norm = euclidean_norm(&beta);
        if norm >= PI {
            return Err(Error::InvalidArgument(format!(
                "warp coefficients have norm {norm} >= π"
            )));
        }
        Ok(Self { beta, norm })
    }

    /// The identity warp.
    pub fn zeros(p: usize) -> Self {
        Self { beta: vec![0.0; p.max(1)], norm: 0.0 }
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }
}

fn euclidean_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Map an unconstrained vector onto the open ball of radius π:
/// `β = π y / √(1 + ‖y‖²)`.
pub fn squash(y: &[f64]) -> Result<BasisCoefficients> {
    if y.is_empty() {
        return Err(Error::InvalidArgument("basis dimension must be at least 1".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite unconstrained warp coordinate".into()));
    }
    let s = (1.0 + y.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let beta: Vec<f64> = y.iter().map(|v| PI * v / s).collect();
    let norm = euclidean_norm(&beta);
    // π·‖y‖/√(1+‖y‖²) can round up to π for enormous ‖y‖.
    let norm = if norm >= PI { PI * (1.0 - f64::EPSILON) } else { norm };
    Ok(BasisCoefficients { beta, norm })
}

/// Inverse of [`squash`]: `y = β / √(π² − ‖β‖²)`.
pub fn unsquash(beta: &BasisCoefficients) -> Vec<f64> {
    let denom = (PI * PI - beta.norm * beta.norm).sqrt();
    beta.beta.iter().map(|b| b / denom).collect()
}

/// Jacobian `∂β_i/∂y_j` of [`squash`], row-major `p × p`.
pub fn squash_jacobian(y: &[f64]) -> Vec<f64> {
    let p = y.len();
    let s2 = 1.0 + y.iter().map(|v| v * v).sum::<f64>();
    let s = s2.sqrt();
    let s3 = s2 * s;
    let mut jac = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            let diag = if i == j { 1.0 / s } else { 0.0 };
            jac[i * p + j] = PI * (diag - y[i] * y[j] / s3);
        }
    }
    jac
}

/// `sin(u)/u`.
fn sinc(u: f64) -> f64 {
    if u.abs() < SMALL_NORM {
        let u2 = u * u;
        1.0 - u2 / 6.0 + u2 * u2 / 120.0
    } else {
        u.sin() / u
    }
}

/// `sinc'(u)/u = (u cos u − sin u)/u³`.
///
/// The direct form cancels catastrophically for small `u`, so the series is
/// used well above [`SMALL_NORM`].
fn dsinc_over_u(u: f64) -> f64 {
    if u.abs() < 0.1 {
        let u2 = u * u;
        -1.0 / 3.0
            + u2 * (1.0 / 30.0
                + u2 * (-1.0 / 840.0 + u2 * (1.0 / 45_360.0 + u2 * (-1.0 / 3_991_680.0))))
    } else {
        (u * u.cos() - u.sin()) / (u * u * u)
    }
}

/// One evaluation of the warp at `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpEvaluation {
    pub t: f64,
    pub value: f64,
    pub deriv: f64,
}

/// Reusable trigonometric buffers for evaluating a warp at many points.
#[derive(Debug, Clone, Default)]
pub struct WarpScratch {
    /// `sin(mπt)` for `m = 0..=2p`.
    sin: Vec<f64>,
    /// `cos(mπt)` for `m = 0..=p`.
    cos: Vec<f64>,
    /// `(C(t) β)_j`, the half-gradient of `∫₀ᵗ v_β²`.
    c_beta: Vec<f64>,
}

impl WarpScratch {
    fn fill(&mut self, p: usize, t: f64) {
        let len = 2 * p + 1;
        self.sin.resize(len, 0.0);
        self.cos.resize(len, 0.0);
        self.c_beta.resize(p, 0.0);
        let (s1, c1) = (PI * t).sin_cos();
        self.sin[0] = 0.0;
        self.cos[0] = 1.0;
        // rotation recurrence; error grows linearly in m
        for m in 1..len {
            let (s, c) = (self.sin[m - 1], self.cos[m - 1]);
            self.sin[m] = s * c1 + c * s1;
            self.cos[m] = c * c1 - s * s1;
        }
    }
}

/// `γ_β` with the `‖β‖`-dependent factors precomputed.
#[derive(Debug, Clone)]
pub struct Warp {
    coeffs: BasisCoefficients,
    cos_r: f64,
    sinc_r: f64,
    /// cos²r
    c2: f64,
    /// 2·sinc(2r), coefficient of ∫v
    mix: f64,
    /// sinc²r, coefficient of ∫v²
    s2: f64,
    /// (d/dr of c2, mix, s2) / r
    dc2: f64,
    dmix: f64,
    ds2: f64,
    /// √2 β_j / (π j)
    int_v_weights: Vec<f64>,
    /// `v_β² = a₀ + Σ_m a_m cos(mπs)`; holds `a₀` then `a_m / (mπ)` for `m = 1..=2p`.
    sq_series: Vec<f64>,
}

impl Warp {
    pub fn new(coeffs: BasisCoefficients) -> Self {
        let r = coeffs.norm;
        let sinc_r = sinc(r);
        let sinc_2r = sinc(2.0 * r);
        let int_v_weights = coeffs
            .beta
            .iter()
            .enumerate()
            .map(|(j, b)| SQRT_2 * b / (PI * (j + 1) as f64))
            .collect();
        let beta = &coeffs.beta;
        let p = beta.len();
        // 2 cos(jπs) cos(kπs) = cos((j+k)πs) + cos((j−k)πs)
        let mut sq_series = vec![0.0; 2 * p + 1];
        for j in 1..=p {
            for k in 1..=p {
                let bb = beta[j - 1] * beta[k - 1];
                sq_series[j + k] += bb;
                sq_series[j.abs_diff(k)] += bb;
            }
        }
        for (m, a) in sq_series.iter_mut().enumerate().skip(1) {
            *a /= PI * m as f64;
        }
        Self {
            cos_r: r.cos(),
            sinc_r,
            c2: r.cos().powi(2),
            mix: 2.0 * sinc_2r,
            s2: sinc_r * sinc_r,
            dc2: -2.0 * sinc_2r,
            dmix: 8.0 * dsinc_over_u(2.0 * r),
            ds2: 2.0 * sinc_r * dsinc_over_u(r),
            int_v_weights,
            sq_series,
            coeffs,
        }
    }

    pub fn identity(p: usize) -> Self {
        Self::new(BasisCoefficients::zeros(p))
    }

    pub fn coefficients(&self) -> &BasisCoefficients {
        &self.coeffs
    }

    pub fn p(&self) -> usize {
        self.coeffs.p()
    }

    /// `v_β(t)`; `t` is not range-checked.
    pub fn v(&self, t: f64) -> f64 {
        self.coeffs
            .beta
            .iter()
            .enumerate()
            .map(|(j, b)| b * SQRT_2 * ((j + 1) as f64 * PI * t).cos())
            .sum()
    }

    /// `∫₀ᵗ v_β(s) ds`.
    pub fn int_v(&self, t: f64) -> f64 {
        let mut scratch = WarpScratch::default();
        scratch.fill(self.p(), t);
        self.int_v_filled(&scratch)
    }

    /// `∫₀ᵗ v_β(s)² ds`.
    pub fn int_v2(&self, t: f64) -> f64 {
        let mut scratch = WarpScratch::default();
        scratch.fill(self.p(), t);
        self.c_beta_filled(&mut scratch, t);
        self.coeffs.beta.iter().zip(&scratch.c_beta).map(|(b, c)| b * c).sum()
    }

    fn int_v_filled(&self, scratch: &WarpScratch) -> f64 {
        self.int_v_weights
            .iter()
            .enumerate()
            .map(|(j, w)| w * scratch.sin[j + 1])
            .sum()
    }

    /// Fill `scratch.c_beta` with `C(t) β`, where
    /// `C_jk = ∫₀ᵗ 2 cos(jπs) cos(kπs) ds`.
    fn c_beta_filled(&self, scratch: &mut WarpScratch, t: f64) {
        let beta = &self.coeffs.beta;
        let p = beta.len();
        for j in 1..=p {
            let mut acc = beta[j - 1] * (t + scratch.sin[2 * j] / (2.0 * PI * j as f64));
            for k in 1..=p {
                if k == j {
                    continue;
                }
                let sum = (j + k) as f64;
                let diff = j as f64 - k as f64;
                let s_diff = if j > k { scratch.sin[j - k] } else { -scratch.sin[k - j] };
                acc += beta[k - 1] * (scratch.sin[j + k] / (PI * sum) + s_diff / (PI * diff));
            }
            scratch.c_beta[j - 1] = acc;
        }
    }

    /// `γ_β(t)`; `t` is not range-checked.
    pub fn value(&self, t: f64) -> f64 {
        let mut scratch = WarpScratch::default();
        self.value_with(t, &mut scratch)
    }

    pub fn value_with(&self, t: f64, scratch: &mut WarpScratch) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return 1.0;
        }
        if self.coeffs.norm == 0.0 {
            return t;
        }
        scratch.fill(self.p(), t);
        let a = self.int_v_filled(scratch);
        let b = self.sq_series[0] * t
            + self.sq_series[1..]
                .iter()
                .zip(&scratch.sin[1..])
                .map(|(c, s)| c * s)
                .sum::<f64>();
        (self.c2 * t + self.mix * a + self.s2 * b).clamp(0.0, 1.0)
    }

    /// `γ_β'(t) = (cos r + sinc(r) v_β(t))²`.
    pub fn deriv(&self, t: f64) -> f64 {
        let q = self.cos_r + self.sinc_r * self.v(t);
        q * q
    }

    /// `γ_β(t)` and `∇_β γ_β(t)` (written into `grad`, length `p`).
    pub fn value_and_grad_with(&self, t: f64, scratch: &mut WarpScratch, grad: &mut [f64]) -> f64 {
        let p = self.p();
        debug_assert_eq!(grad.len(), p);
        if t <= 0.0 || t >= 1.0 {
            grad.iter_mut().for_each(|g| *g = 0.0);
            return t.clamp(0.0, 1.0);
        }
        scratch.fill(p, t);
        self.c_beta_filled(scratch, t);
        let a = self.int_v_filled(scratch);
        let beta = &self.coeffs.beta;
        let b: f64 = beta.iter().zip(&scratch.c_beta).map(|(x, c)| x * c).sum();
        let radial = self.dc2 * t + self.dmix * a + self.ds2 * b;
        for j in 0..p {
            let a_j = SQRT_2 * scratch.sin[j + 1] / (PI * (j + 1) as f64);
            grad[j] = radial * beta[j] + self.mix * a_j + 2.0 * self.s2 * scratch.c_beta[j];
        }
        (self.c2 * t + self.mix * a + self.s2 * b).clamp(0.0, 1.0)
    }

    pub fn grad(&self, t: f64) -> Vec<f64> {
        let mut grad = vec![0.0; self.p()];
        let mut scratch = WarpScratch::default();
        self.value_and_grad_with(t, &mut scratch, &mut grad);
        grad
    }

    /// Solve `γ_β(t) = y` for `t`, to absolute tolerance `tol` in `γ`.
    pub fn inverse(&self, y: f64, tol: f64) -> Result<f64> {
        check_unit("y", y)?;
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
        }
        if y == 0.0 || y == 1.0 {
            return Ok(y);
        }
        if self.coeffs.norm == 0.0 {
            return Ok(y);
        }
        let mut scratch = WarpScratch::default();
        let scratch = std::cell::RefCell::new(&mut scratch);
        monotone_solve(
            |t| self.value_with(t, &mut scratch.borrow_mut()),
            |t| self.deriv(t),
            y,
            0.0,
            1.0,
            INVERSE_SWITCH_WIDTH,
            tol,
        )
    }

    pub fn evaluate(&self, t: f64) -> Result<WarpEvaluation> {
        check_unit("t", t)?;
        Ok(WarpEvaluation { t, value: self.value(t), deriv: self.deriv(t) })
    }
}

/// `v_β(t)`.
pub fn v_eval(beta: &BasisCoefficients, t: f64) -> Result<f64> {
    check_unit("t", t)?;
    Ok(Warp::new(beta.clone()).v(t))
}

/// `∫₀ᵗ v_β(s) ds`.
pub fn int_v(beta: &BasisCoefficients, t: f64) -> Result<f64> {
    check_unit("t", t)?;
    Ok(Warp::new(beta.clone()).int_v(t))
}

/// `∫₀ᵗ v_β(s)² ds`.
pub fn int_v2(beta: &BasisCoefficients, t: f64) -> Result<f64> {
    check_unit("t", t)?;
    Ok(Warp::new(beta.clone()).int_v2(t))
}

/// `γ_β(t)`.
pub fn gamma_eval(beta: &BasisCoefficients, t: f64) -> Result<f64> {
    check_unit("t", t)?;
    Ok(Warp::new(beta.clone()).value(t))
}

/// `γ_β'(t)`.
pub fn gamma_deriv(beta: &BasisCoefficients, t: f64) -> Result<f64> {
    check_unit("t", t)?;
    Ok(Warp::new(beta.clone()).deriv(t))
}

/// `γ_β⁻¹(y)`.
pub fn gamma_inverse(beta: &BasisCoefficients, y: f64, tol: f64) -> Result<f64> {
    Warp::new(beta.clone()).inverse(y, tol)
}

/// `∇_β γ_β(t)`.
pub fn gamma_grad(beta: &BasisCoefficients, t: f64) -> Result<Vec<f64>> {
    check_unit("t", t)?;
    Ok(Warp::new(beta.clone()).grad(t))
}

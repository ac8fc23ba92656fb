//! The composed model `f = g_λ ∘ γ_β` with Gaussian noise.
//!
//! Parameters travel in unconstrained coordinates laid out as
//! `[λ₀, l₁..l_{M+1}, y₁..y_p, (log σ)]`; the least-squares objective omits
//! `log σ`, which is profiled out.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diffeo::{squash, squash_jacobian, BasisCoefficients, Warp, WarpScratch, INVERSE_TOL};
use crate::error::{check_unit, Error, Result};
use crate::template::{
    heights_reconstruct, reconstruct_into, HeightVector, Sign, TemplateBasis, TemplateSpec,
    UnconstrainedHeights,
};

/// Fraction of the unit interval left free at each end by [`AffineMap::min_max`].
pub const AFFINE_MARGIN: f64 = 1e-3;

/// `x = (x_raw − shift) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub shift: f64,
    pub scale: f64,
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap { shift: 0.0, scale: 1.0 };

    /// Min–max map sending the observed range to `[margin, 1 − margin]`.
    pub fn min_max(x_raw: &[f64]) -> Result<Self> {
        let (lo, hi) = x_raw
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::Data("covariate range is not finite".into()));
        }
        if !(hi > lo) {
            return Err(Error::Data(format!(
                "covariate is constant ({lo}); the affine map would have zero scale"
            )));
        }
        let scale = (hi - lo) / (1.0 - 2.0 * AFFINE_MARGIN);
        Ok(Self { shift: lo - AFFINE_MARGIN * scale, scale })
    }

    /// Map an explicit window `[lo, hi]` onto `[0, 1]`.
    pub fn from_window(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::Data(format!("invalid covariate window [{lo}, {hi}]")));
        }
        Ok(Self { shift: lo, scale: hi - lo })
    }

    pub fn to_unit(&self, x_raw: f64) -> f64 {
        (x_raw - self.shift) / self.scale
    }

    pub fn to_user(&self, x: f64) -> f64 {
        self.shift + self.scale * x
    }
}

/// Paired observations with the covariate mapped into `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    x_raw: Vec<f64>,
    y: Vec<f64>,
    x: Vec<f64>,
    affine: AffineMap,
}

impl Dataset {
    /// Build with a min–max affine map.
    pub fn new(x_raw: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let affine = AffineMap::min_max(&x_raw)?;
        Self::with_affine(x_raw, y, affine)
    }

    /// Build with a given affine map; every mapped covariate must land in `[0, 1]`.
    pub fn with_affine(x_raw: Vec<f64>, y: Vec<f64>, affine: AffineMap) -> Result<Self> {
        if x_raw.is_empty() {
            return Err(Error::Data("dataset is empty".into()));
        }
        if x_raw.len() != y.len() {
            return Err(Error::Data(format!(
                "{} covariates but {} responses",
                x_raw.len(),
                y.len()
            )));
        }
        if y.iter().chain(&x_raw).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite observation".into()));
        }
        let x: Vec<f64> = x_raw.iter().map(|v| affine.to_unit(*v)).collect();
        if let Some(bad) = x.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Data(format!(
                "covariate {} maps to {} outside [0, 1]",
                x_raw[bad], x[bad]
            )));
        }
        Ok(Self { x_raw, y, x, affine })
    }

    /// Covariates already on the unit interval (the identity map).
    pub fn unit(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        Self::with_affine(x, y, AffineMap::IDENTITY)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn x_raw(&self) -> &[f64] {
        &self.x_raw
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn affine(&self) -> AffineMap {
        self.affine
    }

    /// Same covariates, new responses.
    pub fn with_responses(&self, y: Vec<f64>) -> Self {
        assert_eq!(y.len(), self.y.len());
        Self { y, ..self.clone() }
    }
}

/// Model parameters in unconstrained coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub heights: UnconstrainedHeights,
    pub y_warp: Vec<f64>,
    pub log_sigma: f64,
}

impl ModelParams {
    pub fn beta(&self) -> Result<BasisCoefficients> {
        squash(&self.y_warp)
    }

    pub fn height_vector(&self) -> Result<HeightVector> {
        heights_reconstruct(&self.heights)
    }

    pub fn sigma(&self) -> f64 {
        self.log_sigma.exp()
    }

    /// Flatten to `[λ₀, l.., y.., (log σ)]`.
    pub fn to_vec(&self, with_sigma: bool) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.heights.l.len() + self.y_warp.len() + 2);
        z.push(self.heights.lambda0);
        z.extend_from_slice(&self.heights.l);
        z.extend_from_slice(&self.y_warp);
        if with_sigma {
            z.push(self.log_sigma);
        }
        z
    }
}

/// A template family, node layout, basis size and sign: everything but the data.
#[derive(Debug, Clone)]
pub struct Model {
    spec: TemplateSpec,
    basis: TemplateBasis,
    p: usize,
    sign: Sign,
}

/// Reusable buffers for the objective loop.
#[derive(Debug, Default)]
struct Scratch {
    warp: WarpScratch,
    lambda: Vec<f64>,
    w: Vec<f64>,
    dw: Vec<f64>,
    dgamma: Vec<f64>,
}

impl Model {
    pub fn new(spec: TemplateSpec, p: usize, sign: Sign) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidArgument("basis dimension must be at least 1".into()));
        }
        let basis = TemplateBasis::new(&spec)?;
        Ok(Self { spec, basis, p, sign })
    }

    pub fn spec(&self) -> &TemplateSpec {
        &self.spec
    }

    pub fn basis(&self) -> &TemplateBasis {
        &self.basis
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.spec.m()
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn with_sign(&self, sign: Sign) -> Self {
        Self { sign, ..self.clone() }
    }

    /// Length of the unconstrained parameter vector.
    pub fn dim(&self, with_sigma: bool) -> usize {
        self.m() + 2 + self.p + usize::from(with_sigma)
    }

    /// Inverse of [`ModelParams::to_vec`]. A missing `log σ` is set to 0.
    pub fn params_from(&self, z: &[f64]) -> ModelParams {
        let m = self.m();
        let with_sigma = z.len() == self.dim(true);
        debug_assert!(with_sigma || z.len() == self.dim(false));
        ModelParams {
            heights: UnconstrainedHeights {
                lambda0: z[0],
                l: z[1..m + 2].to_vec(),
                sign: self.sign,
            },
            y_warp: z[m + 2..m + 2 + self.p].to_vec(),
            log_sigma: if with_sigma { z[m + 2 + self.p] } else { 0.0 },
        }
    }

    fn check_params(&self, params: &ModelParams) -> Result<()> {
        if params.heights.l.len() != self.m() + 1 || params.y_warp.len() != self.p {
            return Err(Error::InvalidArgument(format!(
                "parameters sized for M = {}, p = {}; model has M = {}, p = {}",
                params.heights.m(),
                params.y_warp.len(),
                self.m(),
                self.p
            )));
        }
        Ok(())
    }

    /// `f(x) = g_λ(γ_β(x))`.
    pub fn predict(&self, params: &ModelParams, x: f64) -> Result<f64> {
        check_unit("x", x)?;
        self.check_params(params)?;
        let warp = Warp::new(params.beta()?);
        let heights = params.height_vector()?;
        Ok(self.basis.value(heights.values(), warp.value(x)))
    }

    /// `f` on many points; `xs` must lie in `[0, 1]`.
    pub fn predict_many(&self, params: &ModelParams, xs: &[f64]) -> Result<Vec<f64>> {
        self.check_params(params)?;
        let warp = Warp::new(params.beta()?);
        let heights = params.height_vector()?;
        let mut scratch = WarpScratch::default();
        xs.iter()
            .map(|x| {
                check_unit("x", *x)?;
                Ok(self.basis.value(heights.values(), warp.value_with(*x, &mut scratch)))
            })
            .collect()
    }

    /// Residual sum of squares.
    pub fn sse(&self, params: &ModelParams, data: &Dataset) -> Result<f64> {
        self.check_params(params)?;
        Ok(self.sse_z(&params.to_vec(false), data))
    }

    /// Residual sum of squares at unconstrained `z` (with or without `log σ`).
    /// Returns `+∞` for non-finite coordinates.
    pub fn sse_z(&self, z: &[f64], data: &Dataset) -> f64 {
        if z.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        let m = self.m();
        let Ok(beta) = squash(&z[m + 2..m + 2 + self.p]) else {
            return f64::INFINITY;
        };
        let warp = Warp::new(beta);
        let mut scratch = Scratch::default();
        reconstruct_into(z[0], &z[1..m + 2], self.sign, &mut scratch.lambda);
        let lambda = &scratch.lambda;
        data.x()
            .iter()
            .zip(data.y())
            .map(|(x, y)| {
                let r = y - self.basis.value(lambda, warp.value_with(*x, &mut scratch.warp));
                r * r
            })
            .sum()
    }

    /// Least-squares heights for a fixed warp, returned as `[λ₀, l..]`.
    ///
    /// Increments with the wrong sign or below `range(y) / (4(M + 1))` are
    /// raised to that floor: the result is a valid alternating pattern and no
    /// segment starts collapsed, where the log-gap gradient would vanish.
    pub fn profile_heights(&self, y_warp: &[f64], data: &Dataset) -> Option<Vec<f64>> {
        let k = self.m() + 2;
        let warp = Warp::new(squash(y_warp).ok()?);
        let mut scratch = WarpScratch::default();
        let (mut w, mut dw) = (vec![0.0; k], vec![0.0; k]);
        let mut design = DMatrix::zeros(data.n(), k);
        for (i, x) in data.x().iter().enumerate() {
            self.basis.weights(warp.value_with(*x, &mut scratch), &mut w, &mut dw);
            for j in 0..k {
                design[(i, j)] = w[j];
            }
        }
        let lambda = design.svd(true, true).solve(&DVector::from_column_slice(data.y()), 1e-10).ok()?;
        let (lo, hi) = data
            .y()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        let floor = (hi - lo).max(1e-8) / (4 * (k - 1)) as f64;
        let mut z = Vec::with_capacity(k);
        z.push(lambda[0]);
        for j in 1..k {
            let step = self.sign.step(j) * (lambda[j] - lambda[j - 1]);
            z.push(step.max(floor).ln());
        }
        z.iter().all(|v| v.is_finite()).then_some(z)
    }

    /// Residual sum of squares and its gradient over `[λ₀, l.., y..]`.
    pub fn sse_and_grad(&self, z: &[f64], data: &Dataset) -> (f64, Vec<f64>) {
        self.weighted_sse_and_grad(z, data, None)
    }

    /// `Σ w_i r_i²` and its gradient; unit weights when `weights` is `None`.
    pub fn weighted_sse_and_grad(&self, z: &[f64], data: &Dataset, weights: Option<&[f64]>) -> (f64, Vec<f64>) {
        let m = self.m();
        let p = self.p;
        let d = m + 2 + p;
        let mut grad = vec![0.0; d];
        if z[..d].iter().any(|v| !v.is_finite()) {
            return (f64::INFINITY, grad);
        }
        let y_warp = &z[m + 2..d];
        let Ok(beta) = squash(y_warp) else {
            return (f64::INFINITY, grad);
        };
        let warp = Warp::new(beta);
        let mut s = Scratch::default();
        reconstruct_into(z[0], &z[1..m + 2], self.sign, &mut s.lambda);
        s.w.resize(m + 2, 0.0);
        s.dw.resize(m + 2, 0.0);
        s.dgamma.resize(p, 0.0);

        let mut sse = 0.0;
        let mut d_lambda = vec![0.0; m + 2];
        let mut d_beta = vec![0.0; p];
        for (i, (x, y)) in data.x().iter().zip(data.y()).enumerate() {
            let wi = weights.map_or(1.0, |w| w[i]);
            let t = warp.value_and_grad_with(*x, &mut s.warp, &mut s.dgamma);
            self.basis.weights(t, &mut s.w, &mut s.dw);
            let mut f = 0.0;
            let mut slope = 0.0;
            for k in 0..m + 2 {
                f += s.lambda[k] * s.w[k];
                slope += s.lambda[k] * s.dw[k];
            }
            let r = y - f;
            sse += wi * r * r;
            for k in 0..m + 2 {
                d_lambda[k] -= 2.0 * wi * r * s.w[k];
            }
            let c = -2.0 * wi * r * slope;
            for j in 0..p {
                d_beta[j] += c * s.dgamma[j];
            }
        }

        // heights: λ_k = λ₀ + Σ_{j≤k} s_j exp(l_j)
        let mut tail = 0.0;
        for k in (1..m + 2).rev() {
            tail += d_lambda[k];
            grad[k] = self.sign.step(k) * z[k].exp() * tail;
        }
        grad[0] = tail + d_lambda[0];

        let jac = squash_jacobian(y_warp);
        for j in 0..p {
            grad[m + 2 + j] = (0..p).map(|i| d_beta[i] * jac[i * p + j]).sum();
        }
        (sse, grad)
    }

    /// Gaussian negative log-likelihood `n/2 ln(2πσ²) + SSE/(2σ²)`.
    pub fn neg_log_lik(&self, params: &ModelParams, data: &Dataset) -> Result<f64> {
        let sse = self.sse(params, data)?;
        Ok(nll_from_sse(sse, data.n(), params.log_sigma))
    }

    /// Gradient of [`Model::neg_log_lik`] over every unconstrained coordinate,
    /// `log σ` last.
    pub fn loss_grad(&self, params: &ModelParams, data: &Dataset) -> Result<Vec<f64>> {
        self.check_params(params)?;
        let (_, grad) = self.nll_and_grad(&params.to_vec(true), data);
        Ok(grad)
    }

    /// Negative log-likelihood and gradient at `z = [λ₀, l.., y.., log σ]`.
    pub fn nll_and_grad(&self, z: &[f64], data: &Dataset) -> (f64, Vec<f64>) {
        let d = self.dim(false);
        let log_sigma = z[d];
        let (sse, g) = self.sse_and_grad(z, data);
        let inv_var = (-2.0 * log_sigma).exp();
        let n = data.n() as f64;
        let mut grad: Vec<f64> = g.iter().map(|v| 0.5 * inv_var * v).collect();
        grad.push(n - sse * inv_var);
        (nll_from_sse(sse, data.n(), log_sigma), grad)
    }

    /// `γ_β⁻¹(b_k)` for each interior node, on the unit scale, ascending.
    pub fn stationary_points(&self, params: &ModelParams, tol: f64) -> Result<Vec<f64>> {
        self.check_params(params)?;
        let warp = Warp::new(params.beta()?);
        self.stationary_points_warp(&warp, tol)
    }

    pub(crate) fn stationary_points_warp(&self, warp: &Warp, tol: f64) -> Result<Vec<f64>> {
        self.spec.interior_nodes().iter().map(|b| warp.inverse(*b, tol)).collect()
    }

    /// Stationary points from an unconstrained vector, on the user scale of `data`.
    pub fn stationary_points_user(&self, z: &[f64], data: &Dataset) -> Result<Vec<f64>> {
        let m = self.m();
        let warp = Warp::new(squash(&z[m + 2..m + 2 + self.p])?);
        let affine = data.affine();
        Ok(self
            .stationary_points_warp(&warp, INVERSE_TOL)?
            .into_iter()
            .map(|t| affine.to_user(t))
            .collect())
    }
}

pub(crate) fn nll_from_sse(sse: f64, n: usize, log_sigma: f64) -> f64 {
    let n = n as f64;
    let var = (2.0 * log_sigma).exp();
    0.5 * n * (2.0 * std::f64::consts::PI * var).ln() + sse / (2.0 * var)
}

//! Posterior sampling of the stationary points.
//!
//! Independent normal priors sit on the unconstrained coordinates. The
//! posterior is usually multimodal in the warp, so sampling is seeded from
//! posterior modes: BFGS finds the modes, each mode contributes a
//! Gaussian proposal built from its inverse Hessian, and every chain picks
//! one mode with probability proportional to the posterior density there.
//! The proposal scale is `c · (2.4 / d²) · H⁻¹`, with `c` tuned by
//! Robbins–Monro during burn-in and frozen afterwards at its average over
//! the second half of burn-in.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffeo::{squash, Warp, INVERSE_TOL};
use crate::error::{Error, Result};
use crate::estimate::{initial_point, FitConfig};
use crate::model::{nll_from_sse, Dataset, Model, ModelParams};
use crate::optim::{hessian_from_grad, minimize, BfgsOptions};
use crate::rng::{child_seed, stream};
use crate::template::{Sign, TemplateSpec};

/// Independent zero-mean normal priors on the unconstrained coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSpec {
    /// Per-coordinate SD of the unconstrained warp `y`; `None` means `1/√p`.
    ///
    /// Large values are not vague: the squash map sends large `‖y‖` to
    /// `‖β‖ → π`, where the warp returns to the identity, so a wide prior on
    /// `y` pins the stationary points to the template nodes. `1/√p` keeps
    /// `‖y‖ ≈ 1` and spreads the implied prior on the stationary points
    /// over most of the interval.
    pub sd_warp: Option<f64>,
    pub sd_heights: f64,
    pub sd_log_sigma: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self { sd_warp: None, sd_heights: 10.0, sd_log_sigma: 3.0 }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let warp_ok = self.sd_warp.is_none_or(|s| s > 0.0);
        if !(warp_ok && self.sd_heights > 0.0 && self.sd_log_sigma > 0.0) {
            return Err(Error::InvalidArgument("prior standard deviations must be positive".into()));
        }
        Ok(())
    }

    /// Warp prior SD for a basis of size `p`.
    pub fn warp_sd(&self, p: usize) -> f64 {
        self.sd_warp.unwrap_or(1.0 / (p.max(1) as f64).sqrt())
    }

    fn sd_for(&self, model: &Model, i: usize) -> f64 {
        let m = model.m();
        if i < m + 2 {
            self.sd_heights
        } else if i < m + 2 + model.p() {
            self.warp_sd(model.p())
        } else {
            self.sd_log_sigma
        }
    }

    /// Prior log density and its gradient at `z`.
    fn log_density(&self, model: &Model, z: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let ln_root_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        let mut lp = 0.0;
        let mut grad = grad;
        for (i, v) in z.iter().enumerate() {
            let sd = self.sd_for(model, i);
            lp += -0.5 * (v / sd).powi(2) - sd.ln() - ln_root_2pi;
            if let Some(g) = grad.as_deref_mut() {
                g[i] = -v / (sd * sd);
            }
        }
        lp
    }
}

/// Unnormalized log posterior of `params`.
pub fn log_posterior(model: &Model, params: &ModelParams, data: &Dataset, prior: &PriorSpec) -> Result<f64> {
    let nll = model.neg_log_lik(params, data)?;
    Ok(-nll + prior.log_density(model, &params.to_vec(true), None))
}

/// Log posterior at `z = [λ₀, l.., y.., log σ]`; `−∞` where the likelihood is undefined.
pub fn log_posterior_z(model: &Model, z: &[f64], data: &Dataset, prior: &PriorSpec) -> f64 {
    let d = model.dim(false);
    let sse = model.sse_z(z, data);
    if !sse.is_finite() || !z[d].is_finite() {
        return f64::NEG_INFINITY;
    }
    -nll_from_sse(sse, data.n(), z[d]) + prior.log_density(model, z, None)
}

/// Negative log posterior and gradient, for minimization.
fn neg_log_post_and_grad(model: &Model, z: &[f64], data: &Dataset, prior: &PriorSpec) -> (f64, Vec<f64>) {
    let (nll, mut grad) = model.nll_and_grad(z, data);
    let mut pg = vec![0.0; z.len()];
    let lp = prior.log_density(model, z, Some(&mut pg));
    grad.iter_mut().zip(&pg).for_each(|(g, p)| *g -= p);
    (nll - lp, grad)
}

/// A posterior mode with its Gaussian proposal shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub sign: Sign,
    /// Unconstrained coordinates including `log σ`.
    pub z: Vec<f64>,
    pub log_post: f64,
    /// Regularized inverse Hessian of the negative log posterior, row-major.
    pub cov: Vec<f64>,
    /// Lower Cholesky factor of `cov`, row-major.
    pub chol: Vec<f64>,
}

impl Mode {
    /// Build a mode from a Hessian of the negative log target.
    pub fn from_hessian(sign: Sign, z: Vec<f64>, log_post: f64, hessian: &[f64]) -> Result<Self> {
        let cov = regularized_inverse(hessian, z.len())?;
        let chol = cholesky(&cov, z.len())?;
        Ok(Self { sign, z, log_post, cov, chol })
    }

    /// Build a mode from an explicit proposal covariance (row-major).
    pub fn from_covariance(sign: Sign, z: Vec<f64>, log_post: f64, cov: Vec<f64>) -> Result<Self> {
        let chol = cholesky(&cov, z.len())?;
        Ok(Self { sign, z, log_post, cov, chol })
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }
}

/// Relative eigenvalue floor applied before inverting a Hessian.
pub const EIGEN_FLOOR: f64 = 1e-8;

/// Inverse of a symmetric matrix after flooring its eigenvalues at
/// `EIGEN_FLOOR · λ_max`. Negative eigenvalues are replaced by their magnitude
/// (then floored), so an indefinite Hessian still yields a usable proposal.
pub fn regularized_inverse(h: &[f64], d: usize) -> Result<Vec<f64>> {
    let mat = DMatrix::from_row_slice(d, d, h);
    if mat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite Hessian".into()));
    }
    let sym = (&mat + mat.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if lmax == 0.0 {
        return Err(Error::Numerical("Hessian is identically zero".into()));
    }
    let floor = EIGEN_FLOOR * lmax;
    let inv_vals = eig.eigenvalues.map(|v| 1.0 / v.abs().max(floor));
    let inv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
    let inv = (&inv + inv.transpose()) * 0.5;
    Ok(row_major(&inv))
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn cholesky(cov: &[f64], d: usize) -> Result<Vec<f64>> {
    let chol = DMatrix::from_row_slice(d, d, cov)
        .cholesky()
        .ok_or_else(|| Error::Numerical("proposal covariance is not positive definite".into()))?;
    Ok(row_major(&chol.l()))
}

/// Unconstrained distance below which two optima count as one mode.
pub const MODE_MERGE_DIST: f64 = 1e-3;

/// Locate posterior modes by BFGS from `n_probes` random starts per sign.
///
/// Modes closer than [`MODE_MERGE_DIST`] (Euclidean, unconstrained) are
/// merged, keeping the higher posterior. Returned in decreasing order of log
/// posterior.
pub fn find_modes(
    data: &Dataset,
    spec: &TemplateSpec,
    cfg: &FitConfig,
    prior: &PriorSpec,
    n_probes: usize,
) -> Result<Vec<Mode>> {
    cfg.validate()?;
    prior.validate()?;
    if n_probes == 0 {
        return Err(Error::InvalidArgument("n_probes must be at least 1".into()));
    }
    if cfg.m != spec.m() {
        return Err(Error::InvalidArgument(format!(
            "config asks for M = {} but the template has {} interior nodes",
            cfg.m,
            spec.m()
        )));
    }
    let base = Model::new(spec.clone(), cfg.p, Sign::Plus)?;
    let seed = child_seed(cfg.seed, 0x4D0D);
    let starts: Vec<(Sign, Vec<f64>)> = cfg
        .sign
        .signs()
        .into_iter()
        .flat_map(|s| (0..n_probes).map(move |i| (s, i)))
        .map(|(sign, i)| {
            let model = base.with_sign(sign);
            let mut rng = stream(seed, (sign == Sign::Minus) as u64 * 1_000_000 + i as u64);
            let mut z0 = initial_point(data, &model, cfg.start_dispersion, &mut rng);
            let sse0 = model.sse_z(&z0, data);
            z0.push(0.5 * (sse0 / data.n() as f64).max(1e-12).ln());
            (sign, z0)
        })
        .collect();
    let minus = base.with_sign(Sign::Minus);
    let objective = |sign: Sign, z: &[f64]| {
        let model = if sign == Sign::Plus { &base } else { &minus };
        neg_log_post_and_grad(model, z, data, prior)
    };
    locate_modes(&objective, &starts, &cfg.bfgs(), cfg.hessian_step)
}

/// Minimize `neg_log_target(sign, z)` (value and gradient) from every start,
/// merge optima closer than [`MODE_MERGE_DIST`] within a sign, and attach the
/// regularized inverse Hessian. Returned in decreasing order of log target.
pub fn locate_modes<F>(
    neg_log_target: &F,
    starts: &[(Sign, Vec<f64>)],
    opts: &BfgsOptions,
    hessian_step: f64,
) -> Result<Vec<Mode>>
where
    F: Fn(Sign, &[f64]) -> (f64, Vec<f64>) + Sync,
{
    if starts.is_empty() {
        return Err(Error::InvalidArgument("no starting points".into()));
    }
    let mut found: Vec<(usize, Sign, Vec<f64>, f64, bool)> = starts
        .par_iter()
        .enumerate()
        .map(|(index, (sign, z0))| {
            let res = minimize(|z| neg_log_target(*sign, z), z0, opts);
            (index, *sign, res.x.clone(), -res.f, res.converged() && res.f.is_finite())
        })
        .collect();

    if !found.iter().any(|f| f.4) {
        let detail: Vec<String> = found
            .iter()
            .map(|(i, s, _, lp, _)| format!("probe {i} ({s:?}): log target {lp}"))
            .collect();
        return Err(Error::OptimizationFailed(detail.join("; ")));
    }
    found.retain(|f| f.4);
    found.sort_by(|a, b| b.3.total_cmp(&a.3).then(a.0.cmp(&b.0)));

    let mut kept: Vec<(Sign, Vec<f64>, f64)> = Vec::new();
    for (_, sign, z, lp, _) in found {
        let duplicate = kept.iter().any(|(s, k, _)| {
            *s == sign && k.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() < MODE_MERGE_DIST
        });
        if !duplicate {
            kept.push((sign, z, lp));
        }
    }

    let mut modes = Vec::with_capacity(kept.len());
    for (sign, z, lp) in kept {
        let h = hessian_from_grad(|z| neg_log_target(sign, z).1, &z, hessian_step);
        match Mode::from_hessian(sign, z, lp, &h) {
            Ok(mode) => modes.push(mode),
            Err(e) => log::warn!("dropping mode with unusable Hessian: {e}"),
        }
    }
    if modes.is_empty() {
        return Err(Error::Numerical("no mode produced a usable proposal covariance".into()));
    }
    Ok(modes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub n_chains: usize,
    pub n_iter: usize,
    /// Defaults to `n_iter / 2`.
    pub burn_in: Option<usize>,
    pub target_accept: f64,
    /// Initial proposal multiplier. Defaults to `2.38² d / 2.4`, which makes
    /// the starting proposal the usual `2.38²/d` random-walk scale.
    pub c_init: Option<f64>,
    /// Numerator of the `c · (k / d²)` proposal scale.
    pub scale_numerator: f64,
    pub thin: usize,
    /// Iterations per window for the stuck-chain check during burn-in.
    pub stuck_window: usize,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_chains: 4,
            n_iter: 4000,
            burn_in: None,
            target_accept: 0.23,
            c_init: None,
            scale_numerator: 2.4,
            thin: 1,
            stuck_window: 200,
            seed: 0,
        }
    }
}

impl ChainConfig {
    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.n_iter / 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 || self.n_iter == 0 {
            return Err(Error::InvalidArgument("n_chains and n_iter must be positive".into()));
        }
        if self.burn_in() >= self.n_iter {
            return Err(Error::InvalidArgument(format!(
                "burn_in {} must be below n_iter {}",
                self.burn_in(),
                self.n_iter
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::InvalidArgument("target_accept must lie in (0, 1)".into()));
        }
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thin must be at least 1".into()));
        }
        if let Some(c) = self.c_init {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument("c_init must be positive".into()));
            }
        }
        Ok(())
    }

    fn initial_c(&self, d: usize) -> f64 {
        self.c_init.unwrap_or(2.38 * 2.38 * d as f64 / self.scale_numerator)
    }
}

/// Choose an index with probability proportional to `exp(log_weights)`.
pub fn select_mode<R: Rng>(log_weights: &[f64], rng: &mut R) -> usize {
    let max = log_weights.iter().fold(f64::NEG_INFINITY, |a, v| a.max(*v));
    let w: Vec<f64> = log_weights.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return i;
        }
        u -= wi;
    }
    w.len() - 1
}

/// Output of one random-walk chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRun {
    pub mode: usize,
    pub draws: Vec<Vec<f64>>,
    pub accepted: usize,
    pub proposed: usize,
    pub log_c: f64,
    /// A burn-in window rejected every proposal.
    pub stuck: bool,
}

impl ChainRun {
    pub fn accept_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Run `cfg.n_chains` random-walk Metropolis chains on an arbitrary target.
///
/// `log_target(mode, z)` evaluates the log target for a chain seeded at
/// `modes[mode]`. Chains run in parallel; output is in chain order.
pub fn sample_chains<T>(log_target: &T, modes: &[Mode], cfg: &ChainConfig) -> Result<Vec<ChainRun>>
where
    T: Fn(usize, &[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    if modes.is_empty() {
        return Err(Error::InvalidArgument("at least one mode is required".into()));
    }
    let log_posts: Vec<f64> = modes.iter().map(|m| m.log_post).collect();
    Ok((0..cfg.n_chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(cfg.seed, c as u64);
            let mode_index = select_mode(&log_posts, &mut rng);
            run_one_chain(log_target, mode_index, &modes[mode_index], cfg, &mut rng)
        })
        .collect())
}

fn run_one_chain<T, R>(log_target: &T, mode_index: usize, mode: &Mode, cfg: &ChainConfig, rng: &mut R) -> ChainRun
where
    T: Fn(usize, &[f64]) -> f64,
    R: Rng,
{
    let d = mode.dim();
    let burn_in = cfg.burn_in();
    let base_scale = cfg.scale_numerator / (d * d) as f64;
    let mut log_c = cfg.initial_c(d).ln();
    let mut z = mode.z.clone();
    let mut lp = log_target(mode_index, &z);
    let mut step = vec![0.0; d];
    let mut prop = vec![0.0; d];
    let mut draws = Vec::with_capacity((cfg.n_iter - burn_in) / cfg.thin + 1);
    let (mut accepted, mut proposed) = (0, 0);
    let mut window_accepts = 0;
    let mut stuck = false;
    let mut log_c_sum = 0.0;

    for iter in 0..cfg.n_iter {
        let scale = (log_c.exp() * base_scale).sqrt();
        for s in step.iter_mut() {
            *s = StandardNormal.sample(rng);
        }
        for i in 0..d {
            let row = &mode.chol[i * d..i * d + i + 1];
            let dz: f64 = row.iter().zip(&step).map(|(l, e)| l * e).sum();
            prop[i] = z[i] + scale * dz;
        }
        let lp_prop = log_target(mode_index, &prop);
        let log_ratio = lp_prop - lp;
        let accept_prob = if log_ratio.is_nan() { 0.0 } else { log_ratio.min(0.0).exp() };
        let accept = rng.random::<f64>() < accept_prob;
        if accept {
            std::mem::swap(&mut z, &mut prop);
            lp = lp_prop;
        }

        if iter < burn_in {
            let gain = ((iter + 1) as f64).powf(-0.6);
            log_c += gain * (accept_prob - cfg.target_accept);
            if iter >= burn_in / 2 {
                log_c_sum += log_c;
                if iter + 1 == burn_in {
                    log_c = log_c_sum / (burn_in - burn_in / 2) as f64;
                }
            }
            window_accepts += usize::from(accept);
            if (iter + 1) % cfg.stuck_window == 0 {
                if window_accepts == 0 {
                    stuck = true;
                }
                window_accepts = 0;
            }
        } else {
            proposed += 1;
            accepted += usize::from(accept);
            if (iter - burn_in) % cfg.thin == 0 {
                draws.push(z.clone());
            }
        }
    }
    if stuck {
        log::warn!("chain on mode {mode_index} rejected every proposal for a full burn-in window");
    }
    ChainRun { mode: mode_index, draws, accepted, proposed, log_c, stuck }
}

/// Posterior draws with their stationary-point images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorChains {
    /// `draws[chain][iteration]` in unconstrained coordinates.
    pub draws: Vec<Vec<Vec<f64>>>,
    /// Stationary points (user scale) of every kept draw, chains concatenated in order.
    pub sp_draws: Vec<Vec<f64>>,
    pub accept_rates: Vec<f64>,
    pub accepted: Vec<usize>,
    pub proposed: Vec<usize>,
    pub chain_modes: Vec<usize>,
    pub final_log_c: Vec<f64>,
    pub stuck: Vec<bool>,
    pub modes: Vec<Mode>,
}

impl PosteriorChains {
    /// Stationary-point draws of one chain.
    pub fn sp_chain(&self, chain: usize) -> &[Vec<f64>] {
        let start: usize = self.draws[..chain].iter().map(Vec::len).sum();
        &self.sp_draws[start..start + self.draws[chain].len()]
    }

    pub fn sp_column(&self, k: usize) -> Vec<f64> {
        self.sp_draws.iter().map(|r| r[k]).collect()
    }

    pub fn posterior_mean(&self) -> Vec<f64> {
        let m = self.sp_draws.first().map_or(0, Vec::len);
        (0..m).map(|k| mean(&self.sp_column(k))).collect()
    }

    pub fn posterior_sd(&self) -> Vec<f64> {
        let m = self.sp_draws.first().map_or(0, Vec::len);
        (0..m).map(|k| variance(&self.sp_column(k)).sqrt()).collect()
    }
}

/// Sample the posterior from the given modes and map draws to stationary points.
pub fn run_chains(
    data: &Dataset,
    spec: &TemplateSpec,
    p: usize,
    modes: &[Mode],
    cfg: &ChainConfig,
    prior: &PriorSpec,
) -> Result<PosteriorChains> {
    prior.validate()?;
    let plus = Model::new(spec.clone(), p, Sign::Plus)?;
    let minus = plus.with_sign(Sign::Minus);
    let model_for = |sign: Sign| if sign == Sign::Plus { &plus } else { &minus };
    if let Some(bad) = modes.iter().find(|m| m.dim() != plus.dim(true)) {
        return Err(Error::InvalidArgument(format!(
            "mode has dimension {}, model expects {}",
            bad.dim(),
            plus.dim(true)
        )));
    }
    let target = |mode: usize, z: &[f64]| log_posterior_z(model_for(modes[mode].sign), z, data, prior);
    let runs = sample_chains(&target, modes, cfg)?;

    let affine = data.affine();
    let mut sp_draws = Vec::new();
    for run in &runs {
        let model = model_for(modes[run.mode].sign);
        for z in &run.draws {
            let warp = Warp::new(squash(&z[model.m() + 2..model.m() + 2 + p])?);
            let sp: Vec<f64> = model
                .stationary_points_warp(&warp, INVERSE_TOL)?
                .into_iter()
                .map(|t| affine.to_user(t))
                .collect();
            if !sp.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::Numerical(format!("stationary points out of order: {sp:?}")));
            }
            sp_draws.push(sp);
        }
    }
    Ok(PosteriorChains {
        accept_rates: runs.iter().map(ChainRun::accept_rate).collect(),
        accepted: runs.iter().map(|r| r.accepted).collect(),
        proposed: runs.iter().map(|r| r.proposed).collect(),
        chain_modes: runs.iter().map(|r| r.mode).collect(),
        final_log_c: runs.iter().map(|r| r.log_c).collect(),
        stuck: runs.iter().map(|r| r.stuck).collect(),
        draws: runs.into_iter().map(|r| r.draws).collect(),
        sp_draws,
        modes: modes.to_vec(),
    })
}

/// Approximate posterior draws by the weighted likelihood bootstrap: refit
/// under i.i.d. unit-exponential observation weights.
///
/// Each replicate is warm-started at `start` (unconstrained, without `log σ`)
/// plus `cfg.bootstrap_fresh_starts` random starts. Returns user-scale
/// stationary points of the successful replicates and the dropped count.
pub fn weighted_likelihood_bootstrap(
    data: &Dataset,
    spec: &TemplateSpec,
    cfg: &FitConfig,
    sign: Sign,
    start: &[f64],
    replicates: usize,
) -> Result<(Vec<Vec<f64>>, usize)> {
    let model = Model::new(spec.clone(), cfg.p, sign)?;
    let opts = cfg.bfgs();
    let seed = child_seed(cfg.seed, 0x3B1B);
    let out: Vec<Option<Vec<f64>>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, b as u64);
            let weights: Vec<f64> = (0..data.n()).map(|_| Exp1.sample(&mut rng)).collect();
            let mut starts = vec![start.to_vec()];
            for _ in 0..cfg.bootstrap_fresh_starts {
                starts.push(initial_point(data, &model, cfg.start_dispersion, &mut rng));
            }
            let best = starts
                .iter()
                .map(|z0| minimize(|z| model.weighted_sse_and_grad(z, data, Some(&weights)), z0, &opts))
                .filter(|r| r.f.is_finite())
                .min_by(|a, b| a.f.total_cmp(&b.f))?;
            model.stationary_points_user(&best.x, data).ok()
        })
        .collect();
    let dropped = out.iter().filter(|o| o.is_none()).count();
    Ok((out.into_iter().flatten().collect(), dropped))
}

/// Shortest interval covering `⌈level · N⌉` of the sorted samples.
///
/// Ties go to the window with the smallest lower end.
pub fn hpd_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::DegenerateInterval(format!(
            "{} samples; at least 2 are needed",
            samples.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level {level} not in (0, 1)")));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("NaN sample".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let (lo, hi) = hpd_window(&s, level);
    Ok((s[lo], s[hi]))
}

/// Window size `⌈level·N⌉`, guarding against `0.9 · 100 = 90.000…01`.
pub fn hpd_count(n: usize, level: f64) -> usize {
    ((level * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize
}

/// Index bounds `(i, i + k − 1)` of the HPD window in sorted data.
pub fn hpd_window(sorted: &[f64], level: f64) -> (usize, usize) {
    let k = hpd_count(sorted.len(), level);
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for i in 0..=sorted.len() - k {
        let width = sorted[i + k - 1] - sorted[i];
        if width < best_width {
            best_width = width;
            best = i;
        }
    }
    (best, best + k - 1)
}

/// Per-coordinate HPD intervals at the Bonferroni level `1 − (1 − level)/M`.
pub fn bonferroni_joint(sp_draws: &[Vec<f64>], level: f64, m: usize) -> Result<Vec<(f64, f64)>> {
    if m == 0 {
        return Err(Error::InvalidArgument("M must be at least 1".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level {level} not in (0, 1)")));
    }
    let adjusted = 1.0 - (1.0 - level) / m as f64;
    (0..m)
        .map(|k| {
            let col: Vec<f64> = sp_draws.iter().map(|r| r[k]).collect();
            hpd_interval(&col, adjusted)
        })
        .collect()
}

/// Summary statistics for a sampler run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub accept_rates: Vec<f64>,
    pub accepted: usize,
    pub proposed: usize,
    pub overall_accept: f64,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Split-chain potential scale reduction per stationary point; `None` when
    /// the within-segment variance is zero.
    pub dispersion_ratio: Vec<Option<f64>>,
    pub zero_variance: Vec<bool>,
    pub stuck_chains: Vec<usize>,
}

pub fn chain_diagnostics(chains: &PosteriorChains) -> ChainDiagnostics {
    let m = chains.sp_draws.first().map_or(0, Vec::len);
    let accepted: usize = chains.accepted.iter().sum();
    let proposed: usize = chains.proposed.iter().sum();
    let mut dispersion_ratio = Vec::with_capacity(m);
    let mut zero_variance = Vec::with_capacity(m);
    for k in 0..m {
        let per_chain: Vec<Vec<f64>> = (0..chains.draws.len())
            .map(|c| chains.sp_chain(c).iter().map(|r| r[k]).collect())
            .collect();
        let ratio = split_dispersion(&per_chain);
        zero_variance.push(ratio.is_none());
        dispersion_ratio.push(ratio);
    }
    ChainDiagnostics {
        accept_rates: chains.accept_rates.clone(),
        accepted,
        proposed,
        overall_accept: if proposed == 0 { 0.0 } else { accepted as f64 / proposed as f64 },
        mean: chains.posterior_mean(),
        sd: chains.posterior_sd(),
        dispersion_ratio,
        zero_variance,
        stuck_chains: chains.stuck.iter().enumerate().filter(|(_, s)| **s).map(|(i, _)| i).collect(),
    }
}

/// Split every chain in half and compare between-half to within-half
/// variance: `sqrt(((n−1)/n · W + B/n) / W)`. `None` if `W = 0` or the
/// halves are too short.
pub fn split_dispersion(chains: &[Vec<f64>]) -> Option<f64> {
    let half = chains.iter().map(|c| c.len() / 2).min()?;
    if half < 2 {
        return None;
    }
    // the float mean of a constant run need not equal the constant
    let first = chains[0][0];
    if chains.iter().flatten().all(|v| *v == first) {
        return None;
    }
    let mut segments = Vec::with_capacity(2 * chains.len());
    for c in chains {
        segments.push(&c[..half]);
        segments.push(&c[c.len() - half..]);
    }
    let n = half as f64;
    let means: Vec<f64> = segments.iter().map(|s| mean(s)).collect();
    let within = segments.iter().map(|s| variance(s)).sum::<f64>() / segments.len() as f64;
    if !(within > 0.0) {
        return None;
    }
    let between = n * variance(&means);
    let var_plus = (n - 1.0) / n * within + between / n;
    Some((var_plus / within).sqrt())
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two values.
pub(crate) fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let mu = mean(x);
    x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Convenience: locate modes and sample in one call.
pub fn sample_posterior(
    data: &Dataset,
    spec: &TemplateSpec,
    fit_cfg: &FitConfig,
    chain_cfg: &ChainConfig,
    prior: &PriorSpec,
    n_probes: usize,
) -> Result<PosteriorChains> {
    let modes = find_modes(data, spec, fit_cfg, prior, n_probes)?;
    run_chains(data, spec, fit_cfg.p, &modes, chain_cfg, prior)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hpd_uniform_spacing_takes_leftmost_window() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(hpd_interval(&s, 0.9).unwrap(), (1.0, 90.0));
        assert_eq!(hpd_count(100, 0.9), 90);
    }

    #[test]
    fn hpd_errors() {
        assert!(matches!(hpd_interval(&[1.0], 0.9), Err(Error::DegenerateInterval(_))));
        assert!(hpd_interval(&[1.0, 2.0], 1.0).is_err());
        assert!(hpd_interval(&[1.0, f64::NAN], 0.5).is_err());
    }

    #[test]
    fn bonferroni_single_point_is_plain_hpd() {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![((i * 37) % 200) as f64]).collect();
        let col: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        assert_eq!(bonferroni_joint(&rows, 0.95, 1).unwrap()[0], hpd_interval(&col, 0.95).unwrap());
    }

    #[test]
    fn bonferroni_two_points_uses_adjusted_level() {
        let rows: Vec<Vec<f64>> = (0..400).map(|i| vec![(i % 97) as f64, (i % 89) as f64 + 1000.0]).collect();
        let joint = bonferroni_joint(&rows, 0.95, 2).unwrap();
        let c1: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        assert_eq!(joint[1], hpd_interval(&c1, 0.975).unwrap());
    }

    #[test]
    fn split_dispersion_flags_constant_chains() {
        assert_eq!(split_dispersion(&[vec![1.0; 50], vec![1.0; 50]]), None);
    }

    #[test]
    fn mode_selection_follows_softmax() {
        let mut rng = stream(3, 0);
        let counts = (0..20_000).fold([0usize; 2], |mut c, _| {
            c[select_mode(&[0.0, 2f64.ln()], &mut rng)] += 1;
            c
        });
        let frac = counts[1] as f64 / 20_000.0;
        assert!((frac - 2.0 / 3.0).abs() < 0.02, "{frac}");
    }

    #[test]
    fn regularized_inverse_handles_indefinite_input() {
        let h = [2.0, 0.0, 0.0, -4.0];
        let inv = regularized_inverse(&h, 2).unwrap();
        assert!((inv[0] - 0.5).abs() < 1e-12);
        assert!((inv[3] - 0.25).abs() < 1e-12);
        assert!(cholesky(&inv, 2).is_ok());
    }

    #[test]
    fn chain_config_validation() {
        assert!(ChainConfig { burn_in: Some(10), n_iter: 10, ..ChainConfig::default() }.validate().is_err());
        assert!(ChainConfig { target_accept: 1.0, ..ChainConfig::default() }.validate().is_err());
        assert!(ChainConfig::default().validate().is_ok());
        assert_eq!(ChainConfig::default().burn_in(), 2000);
    }
}

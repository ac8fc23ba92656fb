//! Maximum-likelihood fitting and residual bootstrap.
//!
//! The least-squares surface is multimodal in the warp coordinates, so the
//! fit runs BFGS from several random starts and keeps the lowest loss.
//! Starts run in parallel, each with its own random stream, and the winner is
//! chosen by `(loss, start index)` so the result does not depend on threads.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffeo::INVERSE_TOL;
use crate::error::{Error, Result};
use crate::model::{Dataset, Model, ModelParams};
use crate::optim::{hessian_from_grad, minimize, BfgsOptions, Minimum, Termination};
use crate::rng::{child_seed, stream};
use crate::template::{Sign, TemplateSpec};

/// Which alternating pattern to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignMode {
    Plus,
    Minus,
    /// Fit both and keep the lower loss.
    Auto,
}

impl SignMode {
    pub fn signs(self) -> Vec<Sign> {
        match self {
            SignMode::Plus => vec![Sign::Plus],
            SignMode::Minus => vec![Sign::Minus],
            SignMode::Auto => vec![Sign::Plus, Sign::Minus],
        }
    }
}

impl From<Sign> for SignMode {
    fn from(s: Sign) -> Self {
        match s {
            Sign::Plus => SignMode::Plus,
            Sign::Minus => SignMode::Minus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Warp basis dimension.
    pub p: usize,
    /// Number of stationary points.
    pub m: usize,
    pub sign: SignMode,
    pub n_starts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub f_rel_tol: f64,
    pub seed: u64,
    /// Standard deviation of the random unconstrained warp start.
    pub start_dispersion: f64,
    /// Relative finite-difference step for Hessians.
    pub hessian_step: f64,
    /// Fresh random starts per bootstrap replicate, besides the warm start.
    pub bootstrap_fresh_starts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            p: 5,
            m: 1,
            sign: SignMode::Plus,
            n_starts: 10,
            max_iter: 500,
            grad_tol: 1e-6,
            f_rel_tol: 1e-10,
            seed: 0,
            start_dispersion: 0.5,
            hessian_step: 1e-5,
            bootstrap_fresh_starts: 3,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidArgument("p must be at least 1".into()));
        }
        if self.n_starts == 0 {
            return Err(Error::InvalidArgument("n_starts must be at least 1".into()));
        }
        if !(self.grad_tol > 0.0 && self.f_rel_tol > 0.0 && self.hessian_step > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if !(self.start_dispersion >= 0.0) {
            return Err(Error::InvalidArgument("start_dispersion must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn bfgs(&self) -> BfgsOptions {
        BfgsOptions {
            max_iter: self.max_iter,
            grad_tol: self.grad_tol,
            f_rel_tol: self.f_rel_tol,
            ..BfgsOptions::default()
        }
    }
}

/// One optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub index: usize,
    pub sign: Sign,
    pub params: ModelParams,
    pub loss: f64,
    pub converged: bool,
    pub iterations: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub best: ModelParams,
    pub sign: Sign,
    /// Residual sum of squares at `best`.
    pub loss: f64,
    pub starts: Vec<StartRecord>,
    /// Hessian of the residual sum of squares at `best`, row-major `d × d`.
    pub hessian: Vec<f64>,
    pub dim: usize,
    /// Stationary points on the user scale.
    pub stationary: Vec<f64>,
    /// Stationary points on the unit scale.
    pub stationary_unit: Vec<f64>,
    /// Gradient sup-norm at `best`.
    pub grad_norm: f64,
}

impl FitResult {
    /// Profiled noise variance `SSE/n`.
    pub fn sigma2_hat(&self, n: usize) -> f64 {
        self.loss / n as f64
    }
}

/// Random warps screened per starting point.
pub const START_SCREEN: usize = 8;

/// Starting point `[λ₀, l.., y..]`.
///
/// Draws [`START_SCREEN`] random warps, fits the heights of each by least
/// squares and keeps the candidate with the smallest residual sum of squares.
/// Falls back to heights spread evenly over the data range.
pub fn initial_point<R: Rng>(data: &Dataset, model: &Model, dispersion: f64, rng: &mut R) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..START_SCREEN {
        let y_warp: Vec<f64> = (0..model.p())
            .map(|_| {
                let e: f64 = StandardNormal.sample(rng);
                dispersion * e
            })
            .collect();
        let mut z = model
            .profile_heights(&y_warp, data)
            .unwrap_or_else(|| spread_heights(data, model));
        z.extend_from_slice(&y_warp);
        let sse = model.sse_z(&z, data);
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, z));
        }
    }
    best.map(|(_, z)| z).unwrap_or_default()
}

fn spread_heights(data: &Dataset, model: &Model) -> Vec<f64> {
    let (lo, hi) = data
        .y()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let range = (hi - lo).max(1e-8);
    let m = model.m();
    let mut z = Vec::with_capacity(model.dim(false));
    z.push(match model.sign() {
        Sign::Plus => lo,
        Sign::Minus => hi,
    });
    z.extend(std::iter::repeat_n((range / (m + 1) as f64).ln(), m + 1));
    z
}

fn run_from(model: &Model, data: &Dataset, z0: &[f64], opts: &BfgsOptions) -> Minimum {
    minimize(|z| model.sse_and_grad(z, data), z0, opts)
}

fn record(model: &Model, index: usize, res: &Minimum) -> StartRecord {
    StartRecord {
        index,
        sign: model.sign(),
        params: model.params_from(&res.x),
        loss: res.f,
        converged: res.converged(),
        iterations: res.iterations,
        termination: res.termination,
    }
}

/// Pick the lowest loss among converged records, falling back to any finite loss.
fn select_best(records: &[StartRecord]) -> Option<&StartRecord> {
    let key = |r: &&StartRecord| (r.loss, r.index);
    let by_key = |a: &&StartRecord, b: &&StartRecord| key(a).partial_cmp(&key(b)).unwrap();
    records
        .iter()
        .filter(|r| r.converged && r.loss.is_finite())
        .min_by(by_key)
        .or_else(|| {
            let fallback = records.iter().filter(|r| r.loss.is_finite()).min_by(by_key);
            if fallback.is_some() {
                log::warn!("no start met the convergence criteria; using the lowest finite loss");
            }
            fallback
        })
}

/// Multi-start BFGS estimate of the least-squares fit.
pub fn fit_mle(data: &Dataset, spec: &TemplateSpec, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    if cfg.m != spec.m() {
        return Err(Error::InvalidArgument(format!(
            "config asks for M = {} but the template has {} interior nodes",
            cfg.m,
            spec.m()
        )));
    }
    let base = Model::new(spec.clone(), cfg.p, Sign::Plus)?;
    if data.n() <= base.dim(false) {
        log::warn!(
            "{} observations for {} unconstrained parameters",
            data.n(),
            base.dim(false)
        );
    }
    let opts = cfg.bfgs();
    let signs = cfg.sign.signs();
    let jobs: Vec<(Sign, usize)> = signs
        .iter()
        .flat_map(|s| (0..cfg.n_starts).map(move |i| (*s, i)))
        .collect();
    let records: Vec<StartRecord> = jobs
        .par_iter()
        .enumerate()
        .map(|(index, (sign, i))| {
            let model = base.with_sign(*sign);
            let stream_id = (*sign == Sign::Minus) as u64 * 1_000_000 + *i as u64;
            let mut rng = stream(cfg.seed, stream_id);
            let z0 = initial_point(data, &model, cfg.start_dispersion, &mut rng);
            record(&model, index, &run_from(&model, data, &z0, &opts))
        })
        .collect();
    finish_fit(data, &base, cfg, records)
}

/// Keep iterating from the winning start until the gradient test passes,
/// with the stall rule switched off.
fn polish_best(data: &Dataset, base: &Model, cfg: &FitConfig, records: &mut [StartRecord]) {
    let Some(k) = select_best(records).map(|r| r.index) else { return };
    let rec = &records[k];
    if rec.termination == Termination::GradientTolerance {
        return;
    }
    let model = base.with_sign(rec.sign);
    let opts = BfgsOptions { f_rel_tol: 0.0, ..cfg.bfgs() };
    let res = run_from(&model, data, &rec.params.to_vec(false), &opts);
    if res.f.is_finite() && res.f <= rec.loss {
        let iterations = rec.iterations + res.iterations;
        let converged = rec.converged || res.converged();
        records[k] = StartRecord { iterations, converged, ..record(&model, k, &res) };
    }
}

fn finish_fit(data: &Dataset, base: &Model, cfg: &FitConfig, mut records: Vec<StartRecord>) -> Result<FitResult> {
    polish_best(data, base, cfg, &mut records);
    let best = select_best(&records).ok_or_else(|| {
        let detail: Vec<String> = records
            .iter()
            .map(|r| format!("start {}: {:?}, loss {}", r.index, r.termination, r.loss))
            .collect();
        Error::OptimizationFailed(detail.join("; "))
    })?;
    let model = base.with_sign(best.sign);
    let params = best.params.clone();
    let z = params.to_vec(false);
    let (loss, grad) = model.sse_and_grad(&z, data);
    let hessian = hessian_at(&model, &params, data, cfg.hessian_step)?;
    let stationary_unit = model.stationary_points(&params, INVERSE_TOL)?;
    let affine = data.affine();
    let stationary = stationary_unit.iter().map(|t| affine.to_user(*t)).collect();
    let sigma2 = loss / data.n() as f64;
    let best = ModelParams { log_sigma: 0.5 * sigma2.max(f64::MIN_POSITIVE).ln(), ..params };
    Ok(FitResult {
        best,
        sign: model.sign(),
        loss,
        grad_norm: grad.iter().fold(0.0f64, |a, v| a.max(v.abs())),
        starts: records,
        hessian,
        dim: model.dim(false),
        stationary,
        stationary_unit,
    })
}

/// Central finite-difference Hessian of the residual sum of squares in the
/// unconstrained coordinates `[λ₀, l.., y..]`.
pub fn hessian_at(model: &Model, params: &ModelParams, data: &Dataset, rel_step: f64) -> Result<Vec<f64>> {
    let z = params.to_vec(false);
    let h = hessian_from_grad(|z| model.sse_and_grad(z, data).1, &z, rel_step);
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite Hessian entry".into()));
    }
    Ok(h)
}

/// Stationary-point draws from a residual bootstrap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDraws {
    /// One row per successful replicate, user scale, ascending within a row.
    pub draws: Vec<Vec<f64>>,
    /// Replicates whose refit failed and were dropped.
    pub dropped: usize,
    /// Per replicate: was the warm start at least as good as every fresh start?
    pub warm_won: Vec<bool>,
    /// Unconstrained parameters (without `log σ`) of each kept refit.
    pub fits: Vec<Vec<f64>>,
}

impl BootstrapDraws {
    /// Column `k` of the draws.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.draws.iter().map(|row| row[k]).collect()
    }
}

const BOOTSTRAP_STREAM: u64 = 0xB007;
/// Relative loss difference treated as a tie when comparing warm and fresh refits.
const WARM_TIE: f64 = 1e-9;

/// Resample centered residuals, refit each pseudo-dataset, record the stationary points.
///
/// Each refit is warm-started at the original estimate and also run from
/// `cfg.bootstrap_fresh_starts` random starts; σ is re-profiled per replicate.
pub fn residual_bootstrap(
    fit: &FitResult,
    data: &Dataset,
    spec: &TemplateSpec,
    cfg: &FitConfig,
    replicates: usize,
) -> Result<BootstrapDraws> {
    if replicates == 0 {
        return Err(Error::InvalidArgument("bootstrap needs at least one replicate".into()));
    }
    let model = Model::new(spec.clone(), cfg.p, fit.sign)?;
    let fitted = model.predict_many(&fit.best, data.x())?;
    let mut resid: Vec<f64> = data.y().iter().zip(&fitted).map(|(y, f)| y - f).collect();
    let mean = resid.iter().sum::<f64>() / resid.len() as f64;
    resid.iter_mut().for_each(|r| *r -= mean);

    let opts = cfg.bfgs();
    let warm = fit.best.to_vec(false);
    let seed = child_seed(cfg.seed, BOOTSTRAP_STREAM);
    let outcomes: Vec<Option<(Vec<f64>, Vec<f64>, bool)>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, b as u64);
            let y_star: Vec<f64> = fitted
                .iter()
                .map(|f| f + resid[rng.random_range(0..resid.len())])
                .collect();
            let boot = data.with_responses(y_star);
            let warm_run = run_from(&model, &boot, &warm, &opts);
            let mut records = vec![record(&model, 0, &warm_run)];
            for i in 0..cfg.bootstrap_fresh_starts {
                let z0 = initial_point(&boot, &model, cfg.start_dispersion, &mut rng);
                records.push(record(&model, i + 1, &run_from(&model, &boot, &z0, &opts)));
            }
            let best = select_best(&records)?;
            let warm_loss = records[0].loss;
            let warm_won = records[1..].iter().all(|r| !(r.loss < warm_loss - WARM_TIE * warm_loss.abs()));
            let z = best.params.to_vec(false);
            let sp = model.stationary_points_user(&z, &boot).ok()?;
            Some((sp, z, warm_won))
        })
        .collect();

    let mut draws = Vec::with_capacity(replicates);
    let mut warm_won = Vec::with_capacity(replicates);
    let mut fits = Vec::with_capacity(replicates);
    let mut dropped = 0;
    for o in outcomes {
        match o {
            Some((sp, z, w)) => {
                draws.push(sp);
                fits.push(z);
                warm_won.push(w);
            }
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("{dropped} of {replicates} bootstrap replicates failed and were dropped");
    }
    Ok(BootstrapDraws { draws, dropped, warm_won, fits })
}

/// Equal-tailed percentile interval of `samples` at `level`.
pub fn percentile_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::DegenerateInterval(format!("{} samples", samples.len())));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level {level} not in (0, 1)")));
    }
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let alpha = 0.5 * (1.0 - level);
    Ok((quantile_sorted(&s, alpha), quantile_sorted(&s, 1.0 - alpha)))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::UnconstrainedHeights;

    fn truth(model: &Model) -> ModelParams {
        ModelParams {
            heights: UnconstrainedHeights { lambda0: 0.2, l: vec![0.3, -0.1], sign: model.sign() },
            y_warp: vec![0.4, -0.3, 0.2],
            log_sigma: 0.0,
        }
    }

    fn clean_data(model: &Model, params: &ModelParams, n: usize) -> Dataset {
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let ys = model.predict_many(params, &xs).unwrap();
        Dataset::unit(xs, ys).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig { n_starts: 0, ..FitConfig::default() }.validate().is_err());
        assert!(FitConfig { p: 0, ..FitConfig::default() }.validate().is_err());
        assert!(FitConfig { grad_tol: 0.0, ..FitConfig::default() }.validate().is_err());
        let spec = TemplateSpec::hermite(2);
        let data = Dataset::unit(vec![0.1, 0.5, 0.9], vec![0.0, 1.0, 0.0]).unwrap();
        assert!(fit_mle(&data, &spec, &FitConfig { m: 1, ..FitConfig::default() }).is_err());
    }

    #[test]
    fn single_start_is_deterministic() {
        let model = Model::new(TemplateSpec::hermite(1), 3, Sign::Plus).unwrap();
        let data = clean_data(&model, &truth(&model), 60);
        let cfg = FitConfig { p: 3, n_starts: 1, seed: 11, ..FitConfig::default() };
        let a = fit_mle(&data, model.spec(), &cfg).unwrap();
        let b = fit_mle(&data, model.spec(), &cfg).unwrap();
        assert_eq!(a, b);

        let mut rng = stream(11, 0);
        let z0 = initial_point(&data, &model, cfg.start_dispersion, &mut rng);
        let direct = run_from(&model, &data, &z0, &cfg.bfgs());
        assert_eq!(a.starts[0].loss, direct.f);
    }

    #[test]
    fn hessian_is_symmetric() {
        let model = Model::new(TemplateSpec::hermite(1), 3, Sign::Plus).unwrap();
        let prm = truth(&model);
        let data = clean_data(&model, &prm, 40);
        let h = hessian_at(&model, &prm, &data, 1e-5).unwrap();
        let d = model.dim(false);
        for i in 0..d {
            for j in 0..d {
                assert_eq!(h[i * d + j], h[j * d + i]);
            }
        }
    }

    #[test]
    fn percentile_interval_basics() {
        let s: Vec<f64> = (0..=100).map(|i| i as f64).collect();
        let (lo, hi) = percentile_interval(&s, 0.9).unwrap();
        assert!((lo - 5.0).abs() < 1e-12 && (hi - 95.0).abs() < 1e-12);
        assert!(percentile_interval(&[1.0], 0.9).is_err());
    }

    #[test]
    fn zero_noise_bootstrap_is_degenerate() {
        let model = Model::new(TemplateSpec::hermite(1), 3, Sign::Plus).unwrap();
        let data = clean_data(&model, &truth(&model), 80);
        let cfg = FitConfig { p: 3, n_starts: 8, seed: 5, ..FitConfig::default() };
        let fit = fit_mle(&data, model.spec(), &cfg).unwrap();
        let boot = residual_bootstrap(&fit, &data, model.spec(), &cfg, 6).unwrap();
        assert_eq!(boot.dropped, 0);
        for row in &boot.draws {
            for (a, b) in row.iter().zip(&fit.stationary) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }
}

//! Simulation studies: data generators, replicate loops and metric tables.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{bonferroni_joint, find_modes, hpd_interval, mean, run_chains, ChainConfig, PriorSpec};
use crate::error::{Error, Result};
use crate::estimate::{fit_mle, percentile_interval, residual_bootstrap, FitConfig, SignMode};
use crate::model::Dataset;
use crate::rng::{child_seed, stream};
use crate::roots::bisect;
use crate::template::{Sign, TemplateFamily, TemplateSpec};

/// Interval levels reported per stationary point.
pub const LEVELS: [f64; 3] = [0.90, 0.95, 0.99];
/// Nominal level of the joint Bonferroni intervals.
pub const JOINT_LEVEL: f64 = 0.95;

pub const SIM1_TRUTH: [f64; 1] = [0.39973];
pub const SIM2_TRUTH: [f64; 2] = [0.24204, 0.68735];

/// `1 + sin 2x + cos 3x + 3x − 2x²`
pub fn sim1_mean(x: f64) -> f64 {
    1.0 + (2.0 * x).sin() + (3.0 * x).cos() + 3.0 * x - 2.0 * x * x
}

pub fn sim1_deriv(x: f64) -> f64 {
    2.0 * (2.0 * x).cos() - 3.0 * (3.0 * x).sin() + 3.0 - 4.0 * x
}

/// `1.4x + sin 2.2x + cos 4x`
pub fn sim2_mean(x: f64) -> f64 {
    1.4 * x + (2.2 * x).sin() + (4.0 * x).cos()
}

pub fn sim2_deriv(x: f64) -> f64 {
    1.4 + 2.2 * (2.2 * x).cos() - 4.0 * (4.0 * x).sin()
}

/// Roots of `df` on `[0, 1]`: sign changes on a uniform grid, refined by bisection.
pub fn derivative_roots(df: impl Fn(f64) -> f64, grid: usize) -> Vec<f64> {
    let xs: Vec<f64> = (0..=grid).map(|i| i as f64 / grid as f64).collect();
    let mut roots = Vec::new();
    for w in xs.windows(2) {
        let (a, b) = (df(w[0]), df(w[1]));
        if a == 0.0 {
            roots.push(w[0]);
        } else if a * b < 0.0 {
            if let Ok(r) = bisect(&df, w[0], w[1], 1e-14) {
                roots.push(r);
            }
        }
    }
    roots
}

/// A user-supplied generator; usable from code only.
#[derive(Debug, Clone)]
pub struct CustomSim {
    pub mean: fn(f64) -> f64,
    pub sigma: f64,
    pub truth: Vec<f64>,
    pub sign: Sign,
}

impl PartialEq for CustomSim {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::fn_addr_eq(self.mean, other.mean)
            && self.sigma == other.sigma
            && self.truth == other.truth
            && self.sign == other.sign
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimId {
    Sim1,
    Sim2,
    #[serde(skip)]
    Custom(CustomSim),
}

impl SimId {
    pub fn mean(&self, x: f64) -> f64 {
        match self {
            SimId::Sim1 => sim1_mean(x),
            SimId::Sim2 => sim2_mean(x),
            SimId::Custom(c) => (c.mean)(x),
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            SimId::Sim1 => 0.25,
            SimId::Sim2 => 0.15,
            SimId::Custom(c) => c.sigma,
        }
    }

    pub fn truth(&self) -> Vec<f64> {
        match self {
            SimId::Sim1 => SIM1_TRUTH.to_vec(),
            SimId::Sim2 => SIM2_TRUTH.to_vec(),
            SimId::Custom(c) => c.truth.clone(),
        }
    }

    pub fn sign(&self) -> Sign {
        match self {
            SimId::Sim1 | SimId::Sim2 => Sign::Plus,
            SimId::Custom(c) => c.sign,
        }
    }

    /// Basis size keyed to the sample size: {4,5,6,7} and {7,8,9,10} for
    /// n ∈ {50,100,200,300}; other n use the nearest schedule entry.
    pub fn default_p(&self, n: usize) -> usize {
        const NS: [usize; 4] = [50, 100, 200, 300];
        let slot = (0..4).min_by_key(|&i| NS[i].abs_diff(n)).unwrap_or(0);
        match self {
            SimId::Sim2 => 7 + slot,
            _ => 4 + slot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyMethod {
    Bayes,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub id: SimId,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub method: StudyMethod,
    /// Defaults to the schedule in [`SimId::default_p`].
    #[serde(default)]
    pub p_basis: Option<usize>,
    /// Overrides the generator's noise level.
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub family: TemplateFamily,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default = "default_probes")]
    pub n_probes: usize,
    #[serde(default = "default_boot")]
    pub bootstrap_replicates: usize,
}

fn default_probes() -> usize {
    10
}

fn default_boot() -> usize {
    200
}

impl SimDesign {
    pub fn new(id: SimId, n: usize, reps: usize, seed: u64, method: StudyMethod) -> Self {
        Self {
            id,
            n,
            reps,
            seed,
            method,
            p_basis: None,
            sigma: None,
            family: TemplateFamily::Hermite,
            chain: ChainConfig::default(),
            prior: PriorSpec::default(),
            n_probes: default_probes(),
            bootstrap_replicates: default_boot(),
        }
    }

    pub fn p(&self) -> usize {
        self.p_basis.unwrap_or_else(|| self.id.default_p(self.n))
    }

    pub fn sigma(&self) -> f64 {
        self.sigma.unwrap_or_else(|| self.id.sigma())
    }

    pub fn m(&self) -> usize {
        self.id.truth().len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be at least 1".into()));
        }
        if self.n < 10 {
            return Err(Error::InvalidArgument(format!("n = {} is below the minimum of 10", self.n)));
        }
        if self.p() == 0 {
            return Err(Error::InvalidArgument("p_basis must be at least 1".into()));
        }
        if !(self.sigma() >= 0.0) {
            return Err(Error::InvalidArgument("sigma must be nonnegative".into()));
        }
        let truth = self.id.truth();
        if truth.is_empty() || truth.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("truth must be nonempty and strictly ascending".into()));
        }
        if self.n_probes == 0 {
            return Err(Error::InvalidArgument("n_probes must be at least 1".into()));
        }
        if self.method == StudyMethod::Bootstrap && self.bootstrap_replicates < 2 {
            return Err(Error::InvalidArgument("bootstrap_replicates must be at least 2".into()));
        }
        self.prior.validate()?;
        self.chain.validate()
    }
}

const DATA_STREAM: u64 = 0xDA7A;
const FIT_STREAM: u64 = 0xF17;

/// Replicate `rep_index` of the design: `X ~ U(0,1)`, `Y = f(X) + N(0, σ²)`.
pub fn gen_sim(design: &SimDesign, rep_index: usize) -> Result<Dataset> {
    let mut rng = stream(child_seed(design.seed, DATA_STREAM), rep_index as u64);
    let sigma = design.sigma();
    let noise = Normal::new(0.0, sigma.max(0.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut x = Vec::with_capacity(design.n);
    let mut y = Vec::with_capacity(design.n);
    for _ in 0..design.n {
        let xi: f64 = rng.random();
        let e = if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        x.push(xi);
        y.push(design.id.mean(xi) + e);
    }
    Dataset::unit(x, y)
}

/// Summaries of one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    /// Posterior mean (Bayes) or MLE (bootstrap) per stationary point.
    pub estimate: Vec<f64>,
    /// Posterior or bootstrap standard deviation per stationary point.
    pub sd: Vec<f64>,
    /// `intervals[level][point]` for the levels in [`LEVELS`].
    pub intervals: Vec<Vec<(f64, f64)>>,
    pub hits: Vec<Vec<bool>>,
    pub joint_intervals: Vec<(f64, f64)>,
    pub joint_hit: bool,
    /// Mean post-burn-in acceptance (Bayes only).
    pub accept_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub index: usize,
    pub message: String,
}

/// Aggregates for one stationary point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point: usize,
    pub truth: f64,
    /// Coverage at each of [`LEVELS`].
    pub coverage: Vec<f64>,
    pub rmse: f64,
    pub bias: f64,
    pub avg_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub design: SimDesign,
    pub p: usize,
    pub replicates: Vec<ReplicateRecord>,
    pub failures: Vec<ReplicateFailure>,
    pub points: Vec<PointSummary>,
    pub joint_coverage: f64,
}

impl StudyResult {
    /// Recompute the aggregates from `replicates`.
    pub fn aggregate(design: SimDesign, p: usize, replicates: Vec<ReplicateRecord>, failures: Vec<ReplicateFailure>) -> Self {
        let truth = design.id.truth();
        let r = replicates.len() as f64;
        let points = if replicates.is_empty() {
            Vec::new()
        } else {
            truth
                .iter()
                .enumerate()
                .map(|(k, &b)| {
                    let err: Vec<f64> = replicates.iter().map(|rep| rep.estimate[k] - b).collect();
                    PointSummary {
                        point: k + 1,
                        truth: b,
                        coverage: (0..LEVELS.len())
                            .map(|l| replicates.iter().filter(|rep| rep.hits[l][k]).count() as f64 / r)
                            .collect(),
                        rmse: (err.iter().map(|e| e * e).sum::<f64>() / r).sqrt(),
                        bias: mean(&err),
                        avg_sd: replicates.iter().map(|rep| rep.sd[k]).sum::<f64>() / r,
                    }
                })
                .collect()
        };
        let joint_coverage = if replicates.is_empty() {
            0.0
        } else {
            replicates.iter().filter(|rep| rep.joint_hit).count() as f64 / r
        };
        Self { design, p, replicates, failures, points, joint_coverage }
    }

    pub fn point(&self, k: usize) -> Option<&PointSummary> {
        self.points.get(k)
    }

    /// Mean estimate of each stationary point across replicates.
    pub fn mean_estimate(&self) -> Vec<f64> {
        (0..self.design.m())
            .map(|k| mean(&self.replicates.iter().map(|r| r.estimate[k]).collect::<Vec<_>>()))
            .collect()
    }
}

/// Run every replicate of `design` and aggregate.
///
/// Failed replicates are logged, listed in `failures` and left out of the
/// aggregates.
pub fn run_study(design: &SimDesign) -> Result<StudyResult> {
    design.validate()?;
    let p = design.p();
    let spec = TemplateSpec::new(TemplateSpec::default_nodes(design.m()), design.family.clone())?;
    let outcomes: Vec<std::result::Result<ReplicateRecord, ReplicateFailure>> = (0..design.reps)
        .into_par_iter()
        .map(|i| {
            run_replicate(design, &spec, p, i).map_err(|e| ReplicateFailure { index: i, message: e.to_string() })
        })
        .collect();
    let mut replicates = Vec::with_capacity(design.reps);
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => replicates.push(r),
            Err(f) => {
                log::warn!("replicate {} failed: {}", f.index, f.message);
                failures.push(f);
            }
        }
    }
    Ok(StudyResult::aggregate(design.clone(), p, replicates, failures))
}

fn run_replicate(design: &SimDesign, spec: &TemplateSpec, p: usize, index: usize) -> Result<ReplicateRecord> {
    let data = gen_sim(design, index)?;
    let truth = design.id.truth();
    let m = truth.len();
    let fit_cfg = FitConfig {
        p,
        m,
        sign: SignMode::from(design.id.sign()),
        n_starts: design.n_probes,
        seed: child_seed(child_seed(design.seed, FIT_STREAM), index as u64),
        ..FitConfig::default()
    };

    let (estimate, sd, draws, accept_rate, interval): (_, _, Vec<Vec<f64>>, _, fn(&[f64], f64) -> Result<(f64, f64)>) =
        match design.method {
            StudyMethod::Bayes => {
                let modes = find_modes(&data, spec, &fit_cfg, &design.prior, design.n_probes)?;
                let chain_cfg = ChainConfig { seed: fit_cfg.seed, ..design.chain.clone() };
                let chains = run_chains(&data, spec, p, &modes, &chain_cfg, &design.prior)?;
                let accept = mean(&chains.accept_rates);
                (chains.posterior_mean(), chains.posterior_sd(), chains.sp_draws, Some(accept), hpd_interval)
            }
            StudyMethod::Bootstrap => {
                let fit = fit_mle(&data, spec, &fit_cfg)?;
                let boot = residual_bootstrap(&fit, &data, spec, &fit_cfg, design.bootstrap_replicates)?;
                let sd = (0..m).map(|k| crate::bayes::variance(&boot.column(k)).sqrt()).collect();
                (fit.stationary.clone(), sd, boot.draws, None, percentile_interval)
            }
        };
    if draws.len() < 2 {
        return Err(Error::DegenerateInterval(format!("only {} draws", draws.len())));
    }

    let mut intervals = Vec::with_capacity(LEVELS.len());
    let mut hits = Vec::with_capacity(LEVELS.len());
    for level in LEVELS {
        let iv: Vec<(f64, f64)> = (0..m)
            .map(|k| interval(&draws.iter().map(|r| r[k]).collect::<Vec<_>>(), level))
            .collect::<Result<_>>()?;
        hits.push(iv.iter().zip(&truth).map(|((lo, hi), b)| lo <= b && b <= hi).collect());
        intervals.push(iv);
    }
    let joint_intervals = match design.method {
        StudyMethod::Bayes => bonferroni_joint(&draws, JOINT_LEVEL, m)?,
        StudyMethod::Bootstrap => {
            let adjusted = 1.0 - (1.0 - JOINT_LEVEL) / m as f64;
            (0..m)
                .map(|k| percentile_interval(&draws.iter().map(|r| r[k]).collect::<Vec<_>>(), adjusted))
                .collect::<Result<_>>()?
        }
    };
    let joint_hit = joint_intervals.iter().zip(&truth).all(|((lo, hi), b)| lo <= b && b <= hi);
    Ok(ReplicateRecord { index, estimate, sd, intervals, hits, joint_intervals, joint_hit, accept_rate })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Json,
    Text,
}

pub const TABLE_COLUMNS: [&str; 8] =
    ["point", "truth", "coverage_90", "coverage_95", "coverage_99", "rmse", "bias", "avg_sd"];

/// Render the per-point aggregates.
///
/// CSV and JSON print floats in shortest round-trip form, so parsing them back
/// reproduces the aggregates exactly.
pub fn emit_tables(result: &StudyResult, format: TableFormat) -> String {
    match format {
        TableFormat::Csv => {
            let mut out = TABLE_COLUMNS.join(",");
            out.push('\n');
            for pt in &result.points {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    pt.point, pt.truth, pt.coverage[0], pt.coverage[1], pt.coverage[2], pt.rmse, pt.bias, pt.avg_sd
                );
            }
            out
        }
        TableFormat::Json => {
            let doc = serde_json::json!({
                "columns": TABLE_COLUMNS,
                "p": result.p,
                "n": result.design.n,
                "reps": result.design.reps,
                "completed": result.replicates.len(),
                "failed": result.failures.len(),
                "joint_coverage_95": result.joint_coverage,
                "points": result.points,
            });
            let mut s = serde_json::to_string_pretty(&doc).unwrap_or_default();
            s.push('\n');
            s
        }
        TableFormat::Text => {
            let mut out = format!(
                "{:>5} {:>9} {:>7} {:>7} {:>7} {:>9} {:>10} {:>9}\n",
                "point", "truth", "cov90", "cov95", "cov99", "rmse", "bias", "avg_sd"
            );
            for pt in &result.points {
                let _ = writeln!(
                    out,
                    "{:>5} {:>9.5} {:>7.3} {:>7.3} {:>7.3} {:>9.5} {:>10.3e} {:>9.5}",
                    pt.point, pt.truth, pt.coverage[0], pt.coverage[1], pt.coverage[2], pt.rmse, pt.bias, pt.avg_sd
                );
            }
            if !result.points.is_empty() {
                let _ = writeln!(out, "joint 95% Bonferroni coverage: {:.3}", result.joint_coverage);
            }
            let _ = writeln!(
                out,
                "replicates: {} completed, {} failed (n = {}, p = {})",
                result.replicates.len(),
                result.failures.len(),
                result.design.n,
                result.p
            );
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truths_match_derivative_roots() {
        let r1 = derivative_roots(sim1_deriv, 1000);
        assert_eq!(r1.len(), 1);
        assert!((r1[0] - SIM1_TRUTH[0]).abs() < 5e-6);
        let r2 = derivative_roots(sim2_deriv, 1000);
        assert_eq!(r2.len(), 2);
        for (a, b) in r2.iter().zip(SIM2_TRUTH) {
            assert!((a - b).abs() < 5e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_noise_generator_is_exact() {
        let mut d = SimDesign::new(SimId::Sim1, 30, 1, 4, StudyMethod::Bayes);
        d.sigma = Some(0.0);
        let data = gen_sim(&d, 0).unwrap();
        for (x, y) in data.x().iter().zip(data.y()) {
            assert_eq!(*y, sim1_mean(*x));
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let d = SimDesign::new(SimId::Sim2, 40, 3, 11, StudyMethod::Bayes);
        assert_eq!(gen_sim(&d, 2).unwrap(), gen_sim(&d, 2).unwrap());
        assert_ne!(gen_sim(&d, 1).unwrap(), gen_sim(&d, 2).unwrap());
    }

    #[test]
    fn basis_schedule() {
        assert_eq!(SimId::Sim1.default_p(100), 5);
        assert_eq!(SimId::Sim1.default_p(50), 4);
        assert_eq!(SimId::Sim2.default_p(300), 10);
        assert_eq!(SimId::Sim2.default_p(200), 9);
    }

    #[test]
    fn empty_result_renders_header_only() {
        let d = SimDesign::new(SimId::Sim1, 20, 1, 0, StudyMethod::Bayes);
        let r = StudyResult::aggregate(d, 4, Vec::new(), Vec::new());
        assert_eq!(emit_tables(&r, TableFormat::Csv), format!("{}\n", TABLE_COLUMNS.join(",")));
    }

    #[test]
    fn design_validation() {
        assert!(SimDesign::new(SimId::Sim1, 9, 1, 0, StudyMethod::Bayes).validate().is_err());
        assert!(SimDesign::new(SimId::Sim1, 10, 0, 0, StudyMethod::Bayes).validate().is_err());
        assert!(SimDesign::new(SimId::Sim1, 10, 1, 0, StudyMethod::Bayes).validate().is_ok());
    }
}

//! Run configuration, read from TOML.
//!
//! Every section has defaults, so a minimal fit config is
//!
//! ```toml
//! command = "fit"
//! [data]
//! path = "signal.csv"
//! ```
//!
//! Unknown keys are rejected so that typos surface as config errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use warpfit::bayes::{ChainConfig, PriorSpec};
use warpfit::estimate::{FitConfig, SignMode};
use warpfit::rng::child_seed;
use warpfit::simbench::{SimDesign, SimId, StudyMethod};
use warpfit::template::{TemplateFamily, TemplateSpec};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Fit,
    Sample,
    Simulate,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Sample => "sample",
            Command::Simulate => "simulate",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub model: ModelSection,
    pub fit: FitSection,
    pub sample: SampleSection,
    pub report: ReportSection,
    pub data: Option<DataSection>,
    pub simulate: Option<SimulateSection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            seed: 0,
            output_dir: PathBuf::from("warpfit-out"),
            model: ModelSection::default(),
            fit: FitSection::default(),
            sample: SampleSection::default(),
            report: ReportSection::default(),
            data: None,
            simulate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    /// Column holding the covariate.
    pub x: String,
    /// Column holding the response.
    pub y: String,
    pub delimiter: char,
    /// Covariate window mapped onto `[0, 1]`; defaults to the observed range.
    pub window: Option<[f64; 2]>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { path: PathBuf::new(), x: "x".into(), y: "y".into(), delimiter: ',', window: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Number of stationary points.
    pub m: usize,
    /// Warp basis size.
    pub p: usize,
    pub sign: SignMode,
    pub family: TemplateFamily,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { m: 1, p: 5, sign: SignMode::Plus, family: TemplateFamily::Hermite }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub n_starts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub f_rel_tol: f64,
    pub start_dispersion: f64,
    pub hessian_step: f64,
    pub bootstrap_fresh_starts: usize,
    /// Residual-bootstrap replicates for intervals; 0 skips the bootstrap.
    pub bootstrap_replicates: usize,
    /// When nonempty, `fit` picks `p` from this grid by AIC.
    pub p_grid: Vec<usize>,
}

impl Default for FitSection {
    fn default() -> Self {
        let f = FitConfig::default();
        Self {
            n_starts: f.n_starts,
            max_iter: f.max_iter,
            grad_tol: f.grad_tol,
            f_rel_tol: f.f_rel_tol,
            start_dispersion: f.start_dispersion,
            hessian_step: f.hessian_step,
            bootstrap_fresh_starts: f.bootstrap_fresh_starts,
            bootstrap_replicates: 200,
            p_grid: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    /// Mode-seeded random-walk Metropolis–Hastings.
    Mh,
    /// Weighted likelihood bootstrap.
    Wlb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub sampler: Sampler,
    pub n_chains: usize,
    pub n_iter: usize,
    pub burn_in: Option<usize>,
    pub target_accept: f64,
    pub c_init: Option<f64>,
    pub scale_numerator: f64,
    pub thin: usize,
    pub stuck_window: usize,
    pub n_probes: usize,
    pub wlb_replicates: usize,
    /// Also write every kept draw to `chains.csv`.
    pub write_chains: bool,
    pub prior: PriorSection,
}

impl Default for SampleSection {
    fn default() -> Self {
        let c = ChainConfig::default();
        Self {
            sampler: Sampler::Mh,
            n_chains: c.n_chains,
            n_iter: c.n_iter,
            burn_in: c.burn_in,
            target_accept: c.target_accept,
            c_init: c.c_init,
            scale_numerator: c.scale_numerator,
            thin: c.thin,
            stuck_window: c.stuck_window,
            n_probes: 10,
            wlb_replicates: 1000,
            write_chains: false,
            prior: PriorSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    /// Defaults to `1/√p`.
    pub sd_warp: Option<f64>,
    pub sd_heights: f64,
    pub sd_log_sigma: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        let p = PriorSpec::default();
        Self { sd_warp: p.sd_warp, sd_heights: p.sd_heights, sd_log_sigma: p.sd_log_sigma }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimKind {
    Sim1,
    Sim2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub design: SimKind,
    pub n: usize,
    pub reps: usize,
    pub method: StudyMethod,
    /// Defaults to the sample-size schedule of the design.
    pub p: Option<usize>,
    /// Overrides the design's noise level.
    pub sigma: Option<f64>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { design: SimKind::Sim1, n: 100, reps: 50, method: StudyMethod::Bayes, p: None, sigma: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Credible or confidence level of the reported intervals.
    pub level: f64,
    pub grid_points: usize,
    pub kde_points: usize,
    /// Defaults to Silverman's rule per coordinate.
    pub kde_bandwidth: Option<f64>,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self { level: 0.95, grid_points: 512, kde_points: 256, kde_bandwidth: None }
    }
}

const CHAIN_SEED_STREAM: u64 = 0xC4A1;

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded. The output
    /// directory is left out so that reruns elsewhere hash the same.
    pub fn hash(&self) -> String {
        let canonical = RunConfig { output_dir: PathBuf::new(), ..self.clone() }.to_toml();
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn template(&self) -> CliResult<TemplateSpec> {
        Ok(TemplateSpec::new(TemplateSpec::default_nodes(self.model.m), self.model.family.clone())?)
    }

    pub fn fit_config(&self, p: usize) -> FitConfig {
        let f = &self.fit;
        FitConfig {
            p,
            m: self.model.m,
            sign: self.model.sign,
            n_starts: f.n_starts,
            max_iter: f.max_iter,
            grad_tol: f.grad_tol,
            f_rel_tol: f.f_rel_tol,
            seed: self.seed,
            start_dispersion: f.start_dispersion,
            hessian_step: f.hessian_step,
            bootstrap_fresh_starts: f.bootstrap_fresh_starts,
        }
    }

    pub fn chain_config(&self) -> ChainConfig {
        let s = &self.sample;
        ChainConfig {
            n_chains: s.n_chains,
            n_iter: s.n_iter,
            burn_in: s.burn_in,
            target_accept: s.target_accept,
            c_init: s.c_init,
            scale_numerator: s.scale_numerator,
            thin: s.thin,
            stuck_window: s.stuck_window,
            seed: child_seed(self.seed, CHAIN_SEED_STREAM),
        }
    }

    pub fn prior(&self) -> PriorSpec {
        let p = &self.sample.prior;
        PriorSpec { sd_warp: p.sd_warp, sd_heights: p.sd_heights, sd_log_sigma: p.sd_log_sigma }
    }

    pub fn sim_design(&self) -> CliResult<SimDesign> {
        let s = self
            .simulate
            .as_ref()
            .ok_or_else(|| CliError::Config("simulate: section is required for `simulate`".into()))?;
        let id = match s.design {
            SimKind::Sim1 => SimId::Sim1,
            SimKind::Sim2 => SimId::Sim2,
        };
        let mut d = SimDesign::new(id, s.n, s.reps, self.seed, s.method);
        d.p_basis = s.p;
        d.sigma = s.sigma;
        d.family = self.model.family.clone();
        d.chain = self.chain_config();
        d.prior = self.prior();
        d.n_probes = self.sample.n_probes;
        d.bootstrap_replicates = self.fit.bootstrap_replicates;
        Ok(d)
    }

    /// Check everything `command` needs, with the offending field named.
    pub fn validate_for(&self, command: Command) -> CliResult<()> {
        let err = |field: &str, msg: &str| Err(CliError::Config(format!("{field}: {msg}")));
        let level = self.report.level;
        if !(level > 0.0 && level < 1.0) {
            return err("report.level", "must lie in (0, 1)");
        }
        if self.report.grid_points < 2 {
            return err("report.grid_points", "must be at least 2");
        }
        if self.report.kde_points < 2 {
            return err("report.kde_points", "must be at least 2");
        }
        if self.report.kde_bandwidth.is_some_and(|h| !(h > 0.0)) {
            return err("report.kde_bandwidth", "must be positive");
        }
        if self.model.p == 0 {
            return err("model.p", "must be at least 1");
        }
        if self.fit.p_grid.contains(&0) {
            return err("fit.p_grid", "entries must be at least 1");
        }
        self.template().map_err(|e| CliError::Config(format!("model: {e}")))?;
        self.fit_config(self.model.p).validate().map_err(|e| CliError::Config(format!("fit: {e}")))?;
        match command {
            Command::Fit | Command::Sample => {
                let data = self.data.as_ref();
                if data.is_none_or(|d| d.path.as_os_str().is_empty()) {
                    return err("data.path", &format!("required for `{}`", command.name()));
                }
                if let Some([lo, hi]) = data.and_then(|d| d.window) {
                    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                        return err("data.window", "must be [low, high] with low < high");
                    }
                }
                if command == Command::Sample {
                    self.chain_config().validate().map_err(|e| CliError::Config(format!("sample: {e}")))?;
                    self.prior().validate().map_err(|e| CliError::Config(format!("sample.prior: {e}")))?;
                    if self.sample.n_probes == 0 {
                        return err("sample.n_probes", "must be at least 1");
                    }
                    if self.sample.sampler == Sampler::Wlb && self.sample.wlb_replicates < 2 {
                        return err("sample.wlb_replicates", "must be at least 2");
                    }
                }
            }
            Command::Simulate => {
                self.sim_design()?.validate().map_err(|e| CliError::Config(format!("simulate: {e}")))?;
            }
            Command::Validate => {}
        }
        Ok(())
    }
}

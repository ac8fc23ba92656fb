//! The `fit`, `sample`, `simulate` and `validate` commands.

use std::path::PathBuf;

use warpfit::bayes::{bonferroni_joint, chain_diagnostics, hpd_interval, sample_posterior, weighted_likelihood_bootstrap};
use warpfit::estimate::{fit_mle, percentile_interval, residual_bootstrap, FitResult};
use warpfit::model::{Dataset, Model};
use warpfit::simbench::{emit_tables, run_study, TableFormat};
use warpfit::template::{Sign, TemplateSpec};

use crate::config::{Command, RunConfig, Sampler};
use crate::error::{CliError, CliResult};
use crate::ingest::{ingest_csv, Ingested};
use crate::report::{curve_grid, point_report, Curve, DataSummary, OutputDir, Provenance, Report};
use crate::select::{model_select, selected_p};

/// Curve draws kept for the posterior band.
pub const MAX_CURVE_DRAWS: usize = 1000;

#[derive(Debug)]
pub struct RunOutput {
    pub report: Report,
    pub files: Vec<PathBuf>,
}

/// Run the command named in the config.
pub fn run(config: &RunConfig) -> CliResult<RunOutput> {
    match config.command {
        Some(Command::Fit) => cmd_fit(config),
        Some(Command::Sample) => cmd_sample(config),
        Some(Command::Simulate) => cmd_simulate(config),
        Some(Command::Validate) => cmd_validate(config).map(|report| RunOutput { report, files: Vec::new() }),
        None => Err(CliError::Config("command: required (fit, sample, simulate or validate)".into())),
    }
}

fn load_data(config: &RunConfig) -> CliResult<Ingested> {
    let section = config.data.as_ref().ok_or_else(|| CliError::Config("data: section is required".into()))?;
    ingest_csv(&section.path, section)
}

fn sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
}

fn column(rows: &[Vec<f64>], k: usize) -> Vec<f64> {
    rows.iter().map(|r| r[k]).collect()
}

fn unit_grid(data: &Dataset, grid: &[f64]) -> Vec<f64> {
    let a = data.affine();
    grid.iter().map(|x| a.to_unit(*x).clamp(0.0, 1.0)).collect()
}

fn mle_curve(model: &Model, fit: &FitResult, data: &Dataset, points: usize) -> CliResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let grid = curve_grid(data, points);
    let unit = unit_grid(data, &grid);
    let fitted = model.predict_many(&fit.best, &unit)?;
    Ok((grid, unit, fitted))
}

/// Maximum-likelihood fit with residual-bootstrap percentile intervals.
pub fn cmd_fit(config: &RunConfig) -> CliResult<RunOutput> {
    config.validate_for(Command::Fit)?;
    let Ingested { data, dropped } = load_data(config)?;
    let spec = config.template()?;
    let level = config.report.level;
    let mut report = Report::new(Provenance::new(config, Command::Fit), level);
    report.data = Some(DataSummary::new(&data, dropped));

    let mut p = config.model.p;
    if !config.fit.p_grid.is_empty() {
        let rows = model_select(&data, &spec, &config.fit_config(p), &config.fit.p_grid);
        p = selected_p(&rows).ok_or_else(|| CliError::Numerical("every candidate basis size failed to fit".into()))?;
        report.model_selection = Some(rows);
    }
    let cfg = config.fit_config(p);
    let fit = fit_mle(&data, &spec, &cfg)?;
    let model = Model::new(spec.clone(), p, fit.sign)?;

    let b = config.fit.bootstrap_replicates;
    let boot = if b > 0 { Some(residual_bootstrap(&fit, &data, &spec, &cfg, b)?) } else { None };
    let usable = boot.as_ref().filter(|bd| bd.draws.len() >= 2);
    let m = spec.m();
    let joint_level = 1.0 - (1.0 - level) / m as f64;
    for (k, est) in fit.stationary.iter().enumerate() {
        let (s, iv, joint) = match usable {
            Some(bd) => {
                let col = bd.column(k);
                (Some(sd(&col)), Some(percentile_interval(&col, level)?), Some(percentile_interval(&col, joint_level)?))
            }
            None => (None, None, None),
        };
        report.stationary_points.push(point_report(&data, k + 1, *est, s, iv, joint));
    }

    let (grid, unit, fitted) = mle_curve(&model, &fit, &data, config.report.grid_points)?;
    let draws: Vec<Vec<f64>> = match usable {
        Some(bd) => bd.fits.iter().map(|z| model.predict_many(&model.params_from(z), &unit)).collect::<Result<_, _>>()?,
        None => Vec::new(),
    };
    let curve = Curve::from_draws(grid, fitted, &draws, |col| Ok(percentile_interval(col, level)?))?;

    let n = data.n();
    report.metric("p", p);
    report.metric("sign", sign_name(fit.sign));
    report.metric("sse", fit.loss);
    report.metric("sigma_hat", fit.sigma2_hat(n).sqrt());
    report.metric("grad_norm", fit.grad_norm);
    report.metric("starts_converged", fit.starts.iter().filter(|s| s.converged).count());
    report.metric("starts", fit.starts.len());
    if let Some(bd) = &boot {
        report.metric("bootstrap_kept", bd.draws.len());
        report.metric("bootstrap_dropped", bd.dropped);
    }

    let mut out = OutputDir::create(&config.output_dir)?;
    out.report(&report)?;
    out.curve(&curve)?;
    if let Some(rows) = &report.model_selection {
        out.aic(rows)?;
    }
    Ok(RunOutput { report, files: out.written().to_vec() })
}

fn sign_name(sign: Sign) -> &'static str {
    match sign {
        Sign::Plus => "plus",
        Sign::Minus => "minus",
    }
}

/// At most `max` evenly spaced indices into `0..n`.
fn thin_indices(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    (0..max).map(|i| i * n / max).collect()
}

/// Posterior sampling: MH chains or the weighted likelihood bootstrap.
pub fn cmd_sample(config: &RunConfig) -> CliResult<RunOutput> {
    config.validate_for(Command::Sample)?;
    let Ingested { data, dropped } = load_data(config)?;
    let spec = config.template()?;
    let p = config.model.p;
    let fit_cfg = config.fit_config(p);
    let level = config.report.level;
    let mut report = Report::new(Provenance::new(config, Command::Sample), level);
    report.data = Some(DataSummary::new(&data, dropped));
    report.metric("p", p);
    let grid = curve_grid(&data, config.report.grid_points);
    let unit = unit_grid(&data, &grid);

    let mut out = OutputDir::create(&config.output_dir)?;
    let (sp_draws, curve) = match config.sample.sampler {
        Sampler::Mh => {
            let prior = config.prior();
            let chains =
                sample_posterior(&data, &spec, &fit_cfg, &config.chain_config(), &prior, config.sample.n_probes)?;
            let diag = chain_diagnostics(&chains);
            report.metric("sampler", "mh");
            report.metric("modes", chains.modes.len());
            report.metric("accept_rates", &diag.accept_rates);
            report.metric("accept_overall", diag.overall_accept);
            report.metric("dispersion_ratio", &diag.dispersion_ratio);
            report.metric("stuck_chains", &diag.stuck_chains);
            report.metric("draws", chains.sp_draws.len());
            let curve = posterior_curve(&spec, p, &chains, grid, &unit, level)?;
            if config.sample.write_chains {
                out.chains(&chains.draws, &chains.sp_draws)?;
            }
            (chains.sp_draws, curve)
        }
        Sampler::Wlb => {
            let fit = fit_mle(&data, &spec, &fit_cfg)?;
            let (sp, lost) = weighted_likelihood_bootstrap(
                &data,
                &spec,
                &fit_cfg,
                fit.sign,
                &fit.best.to_vec(false),
                config.sample.wlb_replicates,
            )?;
            report.metric("sampler", "wlb");
            report.metric("sign", sign_name(fit.sign));
            report.metric("draws", sp.len());
            report.metric("dropped", lost);
            let model = Model::new(spec.clone(), p, fit.sign)?;
            let fitted = model.predict_many(&fit.best, &unit)?;
            (sp, Curve { x: grid, fit: fitted, band: None })
        }
    };
    if sp_draws.len() < 2 {
        return Err(CliError::Numerical(format!("{} usable posterior draws", sp_draws.len())));
    }

    let m = spec.m();
    let joint = bonferroni_joint(&sp_draws, level, m)?;
    for (k, j) in joint.iter().enumerate() {
        let col = column(&sp_draws, k);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let iv = hpd_interval(&col, level)?;
        report.stationary_points.push(point_report(&data, k + 1, mean, Some(sd(&col)), Some(iv), Some(*j)));
    }

    out.report(&report)?;
    out.curve(&curve)?;
    out.sp_posterior(&sp_draws, config.report.kde_points, config.report.kde_bandwidth)?;
    Ok(RunOutput { report, files: out.written().to_vec() })
}

/// Pointwise posterior mean and HPD band of the regression curve.
fn posterior_curve(
    spec: &TemplateSpec,
    p: usize,
    chains: &warpfit::bayes::PosteriorChains,
    grid: Vec<f64>,
    unit: &[f64],
    level: f64,
) -> CliResult<Curve> {
    let plus = Model::new(spec.clone(), p, Sign::Plus)?;
    let minus = plus.with_sign(Sign::Minus);
    let tagged: Vec<(Sign, &Vec<f64>)> = chains
        .draws
        .iter()
        .enumerate()
        .flat_map(|(c, draws)| {
            let sign = chains.modes[chains.chain_modes[c]].sign;
            draws.iter().map(move |z| (sign, z))
        })
        .collect();
    let draws: Vec<Vec<f64>> = thin_indices(tagged.len(), MAX_CURVE_DRAWS)
        .into_iter()
        .map(|i| {
            let (sign, z) = tagged[i];
            let model = if sign == Sign::Plus { &plus } else { &minus };
            model.predict_many(&model.params_from(z), unit)
        })
        .collect::<Result<_, _>>()?;
    let n = draws.len() as f64;
    let mean = (0..grid.len()).map(|j| draws.iter().map(|d| d[j]).sum::<f64>() / n).collect();
    Curve::from_draws(grid, mean, &draws, |col| Ok(hpd_interval(col, level)?))
}

/// Simulation study: coverage, RMSE, bias and average SD per stationary point.
pub fn cmd_simulate(config: &RunConfig) -> CliResult<RunOutput> {
    config.validate_for(Command::Simulate)?;
    let design = config.sim_design()?;
    let result = run_study(&design)?;
    let mut report = Report::new(Provenance::new(config, Command::Simulate), warpfit::simbench::JOINT_LEVEL);
    report.metric("p", result.p);
    report.metric("completed", result.replicates.len());
    report.metric("failed", result.failures.len());
    report.metric("joint_coverage_95", result.joint_coverage);
    report.metric("mean_estimate", result.mean_estimate());
    let mut study: serde_json::Value =
        serde_json::from_str(&emit_tables(&result, TableFormat::Json)).map_err(|e| CliError::Numerical(e.to_string()))?;
    study["failures"] = serde_json::to_value(&result.failures).unwrap_or_default();
    report.study = Some(study);

    let mut out = OutputDir::create(&config.output_dir)?;
    out.text("report.json", &report.to_json())?;
    out.text("report.txt", &format!("{}\n{}", report.to_text(), emit_tables(&result, TableFormat::Text)))?;
    out.text("table.csv", &emit_tables(&result, TableFormat::Csv))?;
    Ok(RunOutput { report, files: out.written().to_vec() })
}

/// Check the config for the command it names, and the data file if one is given.
pub fn cmd_validate(config: &RunConfig) -> CliResult<Report> {
    let target = config.command.filter(|c| *c != Command::Validate).unwrap_or(Command::Validate);
    config.validate_for(target)?;
    let mut report = Report::new(Provenance::new(config, Command::Validate), config.report.level);
    report.metric("target", target.name());
    if let Some(section) = config.data.as_ref().filter(|d| !d.path.as_os_str().is_empty()) {
        let Ingested { data, dropped } = ingest_csv(&section.path, section)?;
        report.data = Some(DataSummary::new(&data, dropped));
    }
    Ok(report)
}

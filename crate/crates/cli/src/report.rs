//! Report documents and plot-ready series.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use warpfit::estimate::quantile_sorted;
use warpfit::model::Dataset;

use crate::config::{Command, RunConfig};
use crate::error::{CliError, CliResult};
use crate::select::AicRow;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub version: &'static str,
    pub config_sha256: String,
    pub seed: u64,
    pub command: &'static str,
}

impl Provenance {
    pub fn new(config: &RunConfig, command: Command) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: config.hash(),
            seed: config.seed,
            command: command.name(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataSummary {
    pub n: usize,
    pub dropped: usize,
    pub x_min: f64,
    pub x_max: f64,
    /// The covariate map is `unit = (x - shift) / scale`.
    pub affine_shift: f64,
    pub affine_scale: f64,
}

impl DataSummary {
    pub fn new(data: &Dataset, dropped: usize) -> Self {
        let (x_min, x_max) = observed_range(data);
        let a = data.affine();
        Self { n: data.n(), dropped, x_min, x_max, affine_shift: a.shift, affine_scale: a.scale }
    }
}

/// One stationary point, on the user scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointReport {
    /// 1-based, ascending in location.
    pub index: usize,
    pub estimate: f64,
    /// The estimate on the internal unit scale.
    pub unit_estimate: f64,
    /// Set when the estimate or an interval end was moved into the observed range.
    pub clamped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint_interval: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSummary>,
    /// Level of `interval`; `joint_interval` holds jointly at this level.
    pub level: f64,
    pub stationary_points: Vec<PointReport>,
    pub metrics: BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_selection: Option<Vec<AicRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub study: Option<Value>,
}

impl Report {
    pub fn new(provenance: Provenance, level: f64) -> Self {
        Self {
            provenance,
            data: None,
            level,
            stationary_points: Vec::new(),
            metrics: BTreeMap::new(),
            model_selection: None,
            study: None,
        }
    }

    pub fn metric(&mut self, key: &str, value: impl Serialize) {
        self.metrics.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Human-readable summary.
    pub fn to_text(&self) -> String {
        let p = &self.provenance;
        let mut out = format!("warpfit {} {} (seed {}, config {})\n", p.version, p.command, p.seed, &p.config_sha256[..12]);
        if let Some(d) = &self.data {
            let _ = writeln!(out, "data: n = {} ({} rows dropped), x in [{}, {}]", d.n, d.dropped, d.x_min, d.x_max);
        }
        if !self.stationary_points.is_empty() {
            let pct = 100.0 * self.level;
            let _ = writeln!(
                out,
                "\n{:>5} {:>12} {:>10} {:>25} {:>25}",
                "point",
                "estimate",
                "sd",
                format!("{pct}% interval"),
                format!("joint {pct}% interval")
            );
            let iv = |v: Option<[f64; 2]>| v.map_or("-".to_string(), |[a, b]| format!("[{a:.5}, {b:.5}]"));
            for pt in &self.stationary_points {
                let _ = writeln!(
                    out,
                    "{:>5} {:>12.5} {:>10} {:>25} {:>25}{}",
                    pt.index,
                    pt.estimate,
                    pt.sd.map_or("-".to_string(), |s| format!("{s:.5}")),
                    iv(pt.interval),
                    iv(pt.joint_interval),
                    if pt.clamped { "  (clamped)" } else { "" }
                );
            }
        }
        if let Some(rows) = &self.model_selection {
            let _ = writeln!(out, "\n{:>4} {:>4} {:>14} {:>14}", "p", "d", "sse", "aic");
            for r in rows {
                match &r.error {
                    None => {
                        let _ = writeln!(
                            out,
                            "{:>4} {:>4} {:>14.6} {:>14.4}{}",
                            r.p,
                            r.d,
                            r.sse.unwrap_or(f64::NAN),
                            r.aic.unwrap_or(f64::NAN),
                            if r.selected { "  *" } else { "" }
                        );
                    }
                    Some(e) => {
                        let _ = writeln!(out, "{:>4} {:>4} failed: {e}", r.p, r.d);
                    }
                }
            }
        }
        if !self.metrics.is_empty() {
            out.push('\n');
            for (k, v) in &self.metrics {
                let _ = writeln!(out, "{k}: {v}");
            }
        }
        out
    }
}

pub fn observed_range(data: &Dataset) -> (f64, f64) {
    let xs = data.x_raw();
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Build a point report, clamping everything into the observed range.
pub fn point_report(
    data: &Dataset,
    index: usize,
    estimate: f64,
    sd: Option<f64>,
    interval: Option<(f64, f64)>,
    joint: Option<(f64, f64)>,
) -> PointReport {
    let (lo, hi) = observed_range(data);
    let mut clamped = false;
    let mut clamp = |v: f64| {
        let c = v.clamp(lo, hi);
        clamped |= c != v;
        c
    };
    let estimate = clamp(estimate);
    let interval = interval.map(|(a, b)| [clamp(a), clamp(b)]);
    let joint_interval = joint.map(|(a, b)| [clamp(a), clamp(b)]);
    PointReport {
        index,
        estimate,
        unit_estimate: data.affine().to_unit(estimate),
        clamped,
        sd,
        interval,
        joint_interval,
    }
}

/// Evenly spaced user-scale grid over the observed range.
pub fn curve_grid(data: &Dataset, points: usize) -> Vec<f64> {
    let (lo, hi) = observed_range(data);
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| if i + 1 == points { hi } else { lo + step * i as f64 }).collect()
}

/// Fitted curve with an optional pointwise band.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub x: Vec<f64>,
    pub fit: Vec<f64>,
    pub band: Option<(Vec<f64>, Vec<f64>)>,
}

impl Curve {
    /// Pointwise summary of curve draws: `center` is applied to each grid
    /// column, `interval` gives the band.
    pub fn from_draws(
        x: Vec<f64>,
        fit: Vec<f64>,
        draws: &[Vec<f64>],
        interval: impl Fn(&[f64]) -> CliResult<(f64, f64)>,
    ) -> CliResult<Self> {
        if draws.len() < 2 {
            return Ok(Self { x, fit, band: None });
        }
        let mut lower = Vec::with_capacity(x.len());
        let mut upper = Vec::with_capacity(x.len());
        let mut col = vec![0.0; draws.len()];
        for j in 0..x.len() {
            for (c, d) in col.iter_mut().zip(draws) {
                *c = d[j];
            }
            let (a, b) = interval(&col)?;
            lower.push(a);
            upper.push(b);
        }
        Ok(Self { x, fit, band: Some((lower, upper)) })
    }
}

/// Silverman's rule `0.9 · min(sd, IQR/1.34) · n^(-1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    if h > 0.0 {
        h
    } else {
        // all draws equal
        1e-6 * mean.abs().max(1.0)
    }
}

/// Gaussian KDE on `points` grid values spanning the samples plus three bandwidths.
pub fn kde(samples: &[f64], points: usize, bandwidth: Option<f64>) -> (Vec<f64>, Vec<f64>) {
    let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(samples));
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let step = (hi - lo) / (points - 1) as f64;
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let grid: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    let density = grid
        .iter()
        .map(|g| norm * samples.iter().map(|s| (-0.5 * ((g - s) / h).powi(2)).exp()).sum::<f64>())
        .collect();
    (grid, density)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("cannot write {}: {e}", path.display()))
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn num(v: f64) -> String {
    v.to_string()
}

/// Collects the files of one run in its output directory.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn text(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.path(name);
        std::fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    pub fn report(&mut self, report: &Report) -> CliResult<()> {
        self.text("report.json", &report.to_json())?;
        self.text("report.txt", &report.to_text())
    }

    /// `curve.csv`; band cells are left empty when there is no band.
    pub fn curve(&mut self, curve: &Curve) -> CliResult<()> {
        let path = self.path("curve.csv");
        let rows = (0..curve.x.len()).map(|i| {
            let (lo, hi) = match &curve.band {
                Some((l, u)) => (num(l[i]), num(u[i])),
                None => (String::new(), String::new()),
            };
            vec![num(curve.x[i]), num(curve.fit[i]), lo, hi]
        });
        write_rows(&path, &["x", "fit", "lower", "upper"], rows)?;
        self.written.push(path);
        Ok(())
    }

    /// `sp_posterior.csv` in long format, one KDE grid per stationary point.
    pub fn sp_posterior(&mut self, sp_draws: &[Vec<f64>], points: usize, bandwidth: Option<f64>) -> CliResult<()> {
        let path = self.path("sp_posterior.csv");
        let m = sp_draws.first().map_or(0, Vec::len);
        let mut rows = Vec::with_capacity(m * points);
        for k in 0..m {
            let col: Vec<f64> = sp_draws.iter().map(|r| r[k]).collect();
            let (grid, density) = kde(&col, points, bandwidth);
            for (g, d) in grid.iter().zip(&density) {
                rows.push(vec![(k + 1).to_string(), num(*g), num(*d)]);
            }
        }
        write_rows(&path, &["point", "x", "density"], rows)?;
        self.written.push(path);
        Ok(())
    }

    pub fn aic(&mut self, rows: &[AicRow]) -> CliResult<()> {
        let path = self.path("aic.csv");
        let opt = |v: Option<f64>| v.map_or(String::new(), num);
        let body = rows.iter().map(|r| {
            vec![
                r.p.to_string(),
                r.d.to_string(),
                opt(r.sse),
                opt(r.aic),
                u8::from(r.selected).to_string(),
                r.error.clone().unwrap_or_default(),
            ]
        });
        write_rows(&path, &["p", "d", "sse", "aic", "selected", "error"], body)?;
        self.written.push(path);
        Ok(())
    }

    /// `chains.csv`: every kept draw with its chain, unconstrained
    /// coordinates and stationary points.
    pub fn chains(&mut self, draws: &[Vec<Vec<f64>>], sp: &[Vec<f64>]) -> CliResult<()> {
        let path = self.path("chains.csv");
        let d = draws.iter().flatten().next().map_or(0, Vec::len);
        let m = sp.first().map_or(0, Vec::len);
        let mut header = vec!["chain".to_string(), "draw".to_string()];
        header.extend((0..d).map(|j| format!("z{j}")));
        header.extend((1..=m).map(|k| format!("sp{k}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut sp_rows = sp.iter();
        let mut rows = Vec::new();
        for (c, chain) in draws.iter().enumerate() {
            for (i, z) in chain.iter().enumerate() {
                let mut row = vec![c.to_string(), i.to_string()];
                row.extend(z.iter().map(|v| num(*v)));
                row.extend(sp_rows.next().into_iter().flatten().map(|v| num(*v)));
                rows.push(row);
            }
        }
        write_rows(&path, &header, rows)?;
        self.written.push(path);
        Ok(())
    }
}

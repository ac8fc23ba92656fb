//! Basis-size selection by AIC.

use serde::Serialize;
use warpfit::estimate::{fit_mle, FitConfig};
use warpfit::model::{Dataset, Model};
use warpfit::template::{Sign, TemplateSpec};

/// `2d + n·ln(sse/n)`.
pub fn aic(n: usize, sse: f64, d: usize) -> f64 {
    let n = n as f64;
    2.0 * d as f64 + n * (sse / n).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AicRow {
    pub p: usize,
    /// Free parameters, counting σ.
    pub d: usize,
    pub sse: Option<f64>,
    pub aic: Option<f64>,
    pub selected: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Fit every candidate `p` and rank by AIC, lowest first. Failed candidates
/// are kept, marked, and sorted last.
pub fn model_select(data: &Dataset, spec: &TemplateSpec, base: &FitConfig, grid: &[usize]) -> Vec<AicRow> {
    let mut rows: Vec<AicRow> = grid
        .iter()
        .map(|&p| {
            let d = Model::new(spec.clone(), p.max(1), Sign::Plus).map_or(0, |m| m.dim(false)) + 1;
            match fit_mle(data, spec, &FitConfig { p, ..base.clone() }) {
                Ok(fit) => AicRow {
                    p,
                    d,
                    sse: Some(fit.loss),
                    aic: Some(aic(data.n(), fit.loss, d)),
                    selected: false,
                    error: None,
                },
                Err(e) => AicRow { p, d, sse: None, aic: None, selected: false, error: Some(e.to_string()) },
            }
        })
        .collect();
    rows.sort_by(|a, b| match (a.aic, b.aic) {
        (Some(x), Some(y)) => x.total_cmp(&y).then(a.p.cmp(&b.p)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.p.cmp(&b.p),
    });
    if let Some(first) = rows.first_mut().filter(|r| r.aic.is_some()) {
        first.selected = true;
    }
    rows
}

/// The flagged candidate, if any fit succeeded.
pub fn selected_p(rows: &[AicRow]) -> Option<usize> {
    rows.iter().find(|r| r.selected).map(|r| r.p)
}

//! Posterior predictive forecasting and forecast accuracy.

use rayon::prelude::*;

use crate::analysis::quantile_sorted;
use crate::error::{BarmaError, Result};
use crate::model::{run_filter, Coefs, CovariateMatrix, Link, ModelOrder, ObservationSeries, ParameterVector};
use crate::sampler::ChainDraws;
use crate::simulate::{draw_beta, RngStream};

/// Per-horizon predictive mean and equal-tailed interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSummary {
    pub level: f64,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Cumulative and per-horizon absolute forecast errors.
#[derive(Debug, Clone, PartialEq)]
pub struct MaeReport {
    /// Entry k is the mean absolute error over horizons 1..=k.
    pub cumulative: Vec<f64>,
    pub absolute: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    /// Simulated future values, one row per posterior draw, one column per horizon.
    pub draws: Vec<Vec<f64>>,
    /// Conditional means μ used for each simulated value.
    pub mu: Vec<Vec<f64>>,
    pub summary: ForecastSummary,
    pub mae: Option<MaeReport>,
}

impl ForecastResult {
    pub fn horizon(&self) -> usize {
        self.summary.mean.len()
    }

    /// Point forecasts (predictive means).
    pub fn point(&self) -> &[f64] {
        &self.summary.mean
    }

    /// Scores the point forecasts against held-out values.
    pub fn with_actuals(mut self, actuals: &[f64]) -> Result<Self> {
        self.mae = Some(mae(&self.summary.mean, actuals)?);
        Ok(self)
    }
}

/// Column means and equal-tailed quantile intervals of a draws × h matrix.
pub fn forecast_summary(draws: &[Vec<f64>], level: f64) -> Result<ForecastSummary> {
    if !(level > 0.0 && level < 1.0) {
        return Err(BarmaError::Domain(format!("level {level} outside (0,1)")));
    }
    let h = draws.first().map_or(0, Vec::len);
    if h == 0 || draws.iter().any(|r| r.len() != h) {
        return Err(BarmaError::Insufficient("forecast summary needs a nonempty rectangular draw matrix".into()));
    }
    let tail = (1.0 - level) / 2.0;
    let mut out = ForecastSummary { level, mean: Vec::with_capacity(h), lower: Vec::new(), upper: Vec::new() };
    for k in 0..h {
        let mut col: Vec<f64> = draws.iter().map(|r| r[k]).collect();
        let anchor = col[0];
        out.mean.push(anchor + col.iter().map(|v| v - anchor).sum::<f64>() / col.len() as f64);
        col.sort_by(f64::total_cmp);
        out.lower.push(quantile_sorted(&col, tail));
        out.upper.push(quantile_sorted(&col, 1.0 - tail));
    }
    Ok(out)
}

/// Cumulative mean absolute error per horizon, plus the raw absolute errors.
pub fn mae(point: &[f64], actuals: &[f64]) -> Result<MaeReport> {
    if point.len() != actuals.len() {
        return Err(BarmaError::Dimension(format!(
            "{} forecasts against {} actual values",
            point.len(),
            actuals.len()
        )));
    }
    let absolute: Vec<f64> = point.iter().zip(actuals).map(|(f, a)| (f - a).abs()).collect();
    let mut sum = 0.0;
    let cumulative = absolute
        .iter()
        .enumerate()
        .map(|(k, e)| {
            sum += e;
            sum / (k + 1) as f64
        })
        .collect();
    Ok(MaeReport { cumulative, absolute })
}

/// Converts constrained chain rows (ν, α, β, φ, θ) into parameter vectors.
pub fn params_from_chains(chains: &[ChainDraws], order: &ModelOrder) -> Result<Vec<ParameterVector>> {
    chains
        .iter()
        .flat_map(|c| c.draws.iter())
        .map(|row| ParameterVector::from_flat(row, order))
        .collect()
}

/// Simulates one future path of length `h` for a single parameter draw.
/// Returns (values, conditional means).
fn simulate_path(
    params: &ParameterVector,
    gy: &[f64],
    covariates: &CovariateMatrix,
    link: Link,
    h: usize,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let coefs = Coefs { alpha: params.alpha, beta: &params.beta, phi: &params.phi, theta: &params.theta };
    let (_, mut resid, _) = run_filter(&coefs, gy, covariates, link)?;
    let has_x = covariates.n_cols() > 0;
    let n = gy.len();
    let mut ar_terms: Vec<f64> = (0..n)
        .map(|t| if has_x { gy[t] - coefs.xb(covariates.row(t)) } else { gy[t] })
        .collect();
    let mut ys = Vec::with_capacity(h);
    let mut mus = Vec::with_capacity(h);
    for k in 0..h {
        let xb = if has_x { coefs.xb(covariates.future_row(k)) } else { 0.0 };
        let eta = coefs.eta(n + k, xb, &ar_terms, &resid);
        if !eta.is_finite() {
            return Err(BarmaError::NonFinite(format!("forecast linear predictor at horizon {}", k + 1)));
        }
        let (mu, hit) = link.inverse_scalar(eta);
        let y = draw_beta(mu, params.nu, rng);
        let g = link.g(y);
        resid.push(if hit { g - link.g(mu) } else { g - eta });
        ar_terms.push(g - xb);
        ys.push(y);
        mus.push(mu);
    }
    Ok((ys, mus))
}

/// Posterior predictive simulation `h` steps past the end of `history`.
///
/// Each draw gets its own filter pass over the history and its own random
/// stream (`seed` split by draw index), so results are independent of thread
/// count. With covariates, `covariates` must carry at least `h` future rows.
#[allow(clippy::too_many_arguments)]
pub fn predictive_from_params(
    params: &[ParameterVector],
    history: &ObservationSeries,
    covariates: &CovariateMatrix,
    order: &ModelOrder,
    link: Link,
    h: usize,
    level: f64,
    seed: u64,
) -> Result<ForecastResult> {
    if h == 0 {
        return Err(BarmaError::Domain("forecast horizon must be at least 1".into()));
    }
    if params.is_empty() {
        return Err(BarmaError::Insufficient("no posterior draws to forecast from".into()));
    }
    let covariates = if order.r == 0 && covariates.n_cols() == 0 {
        CovariateMatrix::empty(history.len())
    } else {
        covariates.clone()
    };
    crate::model::check_inputs(history, &covariates, order)?;
    if order.r > 0 && covariates.n_future() < h {
        return Err(BarmaError::Domain(format!(
            "model has {} covariates but only {} future rows were supplied for horizon {h}",
            order.r,
            covariates.n_future()
        )));
    }
    for p in params {
        p.check_order(order)?;
    }
    let gy: Vec<f64> = history.values().iter().map(|&y| link.g(y)).collect();
    let master = RngStream::new(seed);
    let paths: Vec<(Vec<f64>, Vec<f64>)> = params
        .par_iter()
        .enumerate()
        .map(|(i, p)| simulate_path(p, &gy, &covariates, link, h, &mut master.split(i as u64)))
        .collect::<Result<_>>()?;
    let (draws, mu): (Vec<_>, Vec<_>) = paths.into_iter().unzip();
    let summary = forecast_summary(&draws, level)?;
    Ok(ForecastResult { draws, mu, summary, mae: None })
}

/// [`predictive_from_params`] over the pooled draws of fitted chains.
#[allow(clippy::too_many_arguments)]
pub fn predictive_draws(
    chains: &[ChainDraws],
    history: &ObservationSeries,
    covariates: &CovariateMatrix,
    order: &ModelOrder,
    link: Link,
    h: usize,
    level: f64,
    seed: u64,
) -> Result<ForecastResult> {
    let params = params_from_chains(chains, order)?;
    predictive_from_params(&params, history, covariates, order, link, h, level, seed)
}

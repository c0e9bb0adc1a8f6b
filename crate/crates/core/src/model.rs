//! The βARMA observation model: links, the conditional beta density and the
//! recursion producing the conditional means μ_t and errors r_t.

use crate::dual::Scalar;
use crate::error::{BarmaError, Result};

/// Bound applied to the inverse link: μ is kept in [1e-12, 1 − 1e-12].
pub const MU_EPS: f64 = 1e-12;

/// A time series with every value strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    values: Vec<f64>,
}

impl ObservationSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(BarmaError::Domain("series must contain at least one value".into()));
        }
        let bad: Vec<usize> = values
            .iter()
            .enumerate()
            .filter(|(_, &y)| !(y > 0.0 && y < 1.0))
            .map(|(i, _)| i)
            .collect();
        if !bad.is_empty() {
            return Err(BarmaError::Domain(format!(
                "values must lie in (0,1); offending positions {bad:?}"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// First `n` observations.
    pub fn head(&self, n: usize) -> Result<Self> {
        Self::new(self.values[..n.min(self.len())].to_vec())
    }
}

/// Exogenous regressors, one row per observation, plus optional known future rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CovariateMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    future: Vec<f64>,
}

impl CovariateMatrix {
    /// No covariates for a series of length `rows`.
    pub fn empty(rows: usize) -> Self {
        Self { rows, cols: 0, data: Vec::new(), future: Vec::new() }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(BarmaError::Dimension(format!(
                    "covariate row {i} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(BarmaError::Domain(format!("covariate row {i} is not finite")));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { rows: rows.len(), cols, data, future: Vec::new() })
    }

    /// Attaches deterministic future rows used for forecasting.
    pub fn with_future(mut self, rows: &[Vec<f64>]) -> Result<Self> {
        let mut future = Vec::with_capacity(rows.len() * self.cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != self.cols {
                return Err(BarmaError::Dimension(format!(
                    "future covariate row {i} has {} entries, expected {}",
                    row.len(),
                    self.cols
                )));
            }
            future.extend_from_slice(row);
        }
        self.future = future;
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    pub fn n_future(&self) -> usize {
        self.future.len().checked_div(self.cols).unwrap_or(usize::MAX)
    }

    pub fn future_row(&self, k: usize) -> &[f64] {
        &self.future[k * self.cols..(k + 1) * self.cols]
    }

    /// Keeps the first `n` rows as observed and turns the remaining rows into
    /// the future block (existing future rows are appended after them).
    pub fn split_future(&self, n: usize) -> Result<Self> {
        if n > self.rows {
            return Err(BarmaError::Dimension(format!("cannot keep {n} of {} rows", self.rows)));
        }
        let cut = n * self.cols;
        let mut future = self.data[cut..].to_vec();
        future.extend_from_slice(&self.future);
        Ok(Self { rows: n, cols: self.cols, data: self.data[..cut].to_vec(), future })
    }

    /// Rows `start..` as a new matrix (used to drop simulation burn-in).
    pub fn tail_from(&self, start: usize) -> Self {
        Self {
            rows: self.rows - start,
            cols: self.cols,
            data: self.data[start * self.cols..].to_vec(),
            future: self.future.clone(),
        }
    }
}

/// AR order `p`, MA order `q` and covariate count `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelOrder {
    pub p: usize,
    pub q: usize,
    pub r: usize,
}

impl ModelOrder {
    pub fn new(p: usize, q: usize, r: usize) -> Self {
        Self { p, q, r }
    }

    /// Parameter dimension including ν and α.
    pub fn dim(&self) -> usize {
        self.p + self.q + self.r + 2
    }

    /// Number of leading observations the likelihood conditions on.
    pub fn start_index(&self) -> usize {
        self.p.max(self.q)
    }
}

/// γ = (ν, α, β, φ, θ).
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    pub nu: f64,
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
}

impl ParameterVector {
    pub fn new(nu: f64, alpha: f64, beta: Vec<f64>, phi: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        let out = Self { nu, alpha, beta, phi, theta };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(BarmaError::Domain(format!("precision must be positive, got {}", self.nu)));
        }
        if self.flatten().iter().any(|v| !v.is_finite()) {
            return Err(BarmaError::Domain("parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn order(&self) -> ModelOrder {
        ModelOrder::new(self.phi.len(), self.theta.len(), self.beta.len())
    }

    pub fn check_order(&self, order: &ModelOrder) -> Result<()> {
        if self.order() != *order {
            return Err(BarmaError::Dimension(format!(
                "parameters have (p,q,r)=({},{},{}), model expects ({},{},{})",
                self.phi.len(),
                self.theta.len(),
                self.beta.len(),
                order.p,
                order.q,
                order.r
            )));
        }
        Ok(())
    }

    /// Flattens as (ν, α, β, φ, θ).
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 + self.beta.len() + self.phi.len() + self.theta.len());
        v.push(self.nu);
        v.push(self.alpha);
        v.extend_from_slice(&self.beta);
        v.extend_from_slice(&self.phi);
        v.extend_from_slice(&self.theta);
        v
    }

    pub fn from_flat(flat: &[f64], order: &ModelOrder) -> Result<Self> {
        if flat.len() != order.dim() {
            return Err(BarmaError::Dimension(format!(
                "flat vector has {} entries, expected {}",
                flat.len(),
                order.dim()
            )));
        }
        let (r, p) = (order.r, order.p);
        Self::new(
            flat[0],
            flat[1],
            flat[2..2 + r].to_vec(),
            flat[2 + r..2 + r + p].to_vec(),
            flat[2 + r + p..].to_vec(),
        )
    }

    /// Column names in flattening order.
    pub fn names(order: &ModelOrder) -> Vec<String> {
        let mut names = vec!["nu".to_string(), "alpha".to_string()];
        names.extend((1..=order.r).map(|i| format!("beta{i}")));
        names.extend((1..=order.p).map(|i| format!("phi{i}")));
        names.extend((1..=order.q).map(|i| format!("theta{i}")));
        names
    }
}

/// Link function g: (0,1) → ℝ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Link {
    #[default]
    Logit,
    Cloglog,
}

impl Link {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "logit" => Ok(Link::Logit),
            "cloglog" => Ok(Link::Cloglog),
            other => Err(BarmaError::Domain(format!("unknown link '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Link::Logit => "logit",
            Link::Cloglog => "cloglog",
        }
    }

    /// g(x) for x in (0,1).
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x > 0.0 && x < 1.0) {
            return Err(BarmaError::Domain(format!("link argument {x} outside (0,1)")));
        }
        Ok(self.g(x))
    }

    pub(crate) fn g(&self, x: f64) -> f64 {
        match self {
            Link::Logit => (x / (1.0 - x)).ln(),
            Link::Cloglog => (-(-x).ln_1p()).ln(),
        }
    }

    /// g⁻¹(η), clamped to [MU_EPS, 1 − MU_EPS].
    pub fn inverse(&self, eta: f64) -> Result<f64> {
        if !eta.is_finite() {
            return Err(BarmaError::Domain(format!("inverse link argument {eta} is not finite")));
        }
        Ok(self.inverse_scalar(eta).0)
    }

    /// g′(x).
    pub fn derivative(&self, x: f64) -> Result<f64> {
        if !(x > 0.0 && x < 1.0) {
            return Err(BarmaError::Domain(format!("link argument {x} outside (0,1)")));
        }
        Ok(match self {
            Link::Logit => 1.0 / (x * (1.0 - x)),
            Link::Cloglog => -1.0 / ((1.0 - x) * (-x).ln_1p()),
        })
    }

    /// Inverse link on a [`Scalar`]; the flag reports clamping (derivative zero).
    pub(crate) fn inverse_scalar<T: Scalar>(&self, eta: T) -> (T, bool) {
        let e = eta.value();
        let (mu, slope) = match self {
            Link::Logit => {
                let m = 1.0 / (1.0 + (-e).exp());
                (m, m * (1.0 - m))
            }
            Link::Cloglog => {
                let ee = e.exp();
                (-(-ee).exp_m1(), ee * (-ee).exp())
            }
        };
        if mu < MU_EPS {
            (T::constant(MU_EPS), true)
        } else if mu > 1.0 - MU_EPS {
            (T::constant(1.0 - MU_EPS), true)
        } else {
            (eta.chain(mu, slope), false)
        }
    }
}

/// Conditional means and errors from the recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub mu: Vec<f64>,
    pub resid: Vec<f64>,
    /// max(p, q): index of the first fully conditioned term (0-based).
    pub start_index: usize,
    /// Number of μ_t that hit the clamp.
    pub n_clamped: usize,
}

fn check_open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(BarmaError::Domain(format!("{name}={v} outside (0,1)")))
    }
}

/// Log density of Beta(νμ, ν(1−μ)) at y.
pub fn beta_log_density(y: f64, mu: f64, nu: f64) -> Result<f64> {
    check_open_unit("y", y)?;
    check_open_unit("mu", mu)?;
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(BarmaError::Domain(format!("nu={nu} must be positive")));
    }
    Ok(beta_log_density_scalar(y.ln(), (-y).ln_1p(), mu, nu, crate::special::ln_gamma(nu)))
}

/// Beta log density with ln y, ln(1−y) and ln Γ(ν) precomputed.
#[inline]
pub(crate) fn beta_log_density_scalar<T: Scalar>(ln_y: f64, ln_1my: f64, mu: T, nu: T, ln_gamma_nu: T) -> T {
    let a = nu * mu;
    let b = nu * (T::constant(1.0) - mu);
    ln_gamma_nu - a.ln_gamma() - b.ln_gamma() + (a - 1.0) * ln_y + (b - 1.0) * ln_1my
}

/// Var(Y_t | past) = μ(1−μ)/(1+ν).
pub fn conditional_variance(mu: f64, nu: f64) -> Result<f64> {
    check_open_unit("mu", mu)?;
    if !(nu > 0.0) {
        return Err(BarmaError::Domain(format!("nu={nu} must be positive")));
    }
    Ok(mu * (1.0 - mu) / (1.0 + nu))
}

/// ω = α / (1 − Σφ_i).
pub fn long_run_location(alpha: f64, phi: &[f64]) -> Result<f64> {
    let denom = 1.0 - phi.iter().sum::<f64>();
    if denom.abs() < 1e-12 {
        return Err(BarmaError::Singular(format!("AR polynomial at 1 is {denom}")));
    }
    Ok(alpha / denom)
}

/// Regression coefficients in generic scalar form.
pub(crate) struct Coefs<'a, T> {
    pub alpha: T,
    pub beta: &'a [T],
    pub phi: &'a [T],
    pub theta: &'a [T],
}

impl<T: Scalar> Coefs<'_, T> {
    /// X′β for one covariate row.
    #[inline]
    pub fn xb(&self, row: &[f64]) -> T {
        let mut acc = T::constant(0.0);
        for (b, &x) in self.beta.iter().zip(row) {
            acc = acc + *b * x;
        }
        acc
    }

    /// Linear predictor at time `t` given the de-meaned AR terms g(y_s) − X_s′β
    /// and the errors r_s for s < t; pre-sample terms count as zero.
    #[inline]
    pub fn eta(&self, t: usize, xb_t: T, ar_terms: &[T], resid: &[T]) -> T {
        let mut eta = self.alpha + xb_t;
        for (i, phi) in self.phi.iter().enumerate() {
            if let Some(s) = t.checked_sub(i + 1) {
                eta = eta + *phi * ar_terms[s];
            }
        }
        for (j, theta) in self.theta.iter().enumerate() {
            if let Some(s) = t.checked_sub(j + 1) {
                eta = eta + *theta * resid[s];
            }
        }
        eta
    }
}

/// Generic forward pass. `gy[t]` holds g(y_t); returns (μ, r, clamp flags).
pub(crate) fn run_filter<T: Scalar>(
    coefs: &Coefs<'_, T>,
    gy: &[f64],
    covariates: &CovariateMatrix,
    link: Link,
) -> Result<(Vec<T>, Vec<T>, Vec<bool>)> {
    let n = gy.len();
    let mut mu = Vec::with_capacity(n);
    let mut resid = Vec::with_capacity(n);
    let mut ar_terms = Vec::with_capacity(n);
    let mut clamped = Vec::with_capacity(n);
    let has_x = covariates.n_cols() > 0;
    for t in 0..n {
        let xb_t = if has_x { coefs.xb(covariates.row(t)) } else { T::constant(0.0) };
        let eta = coefs.eta(t, xb_t, &ar_terms, &resid);
        if !eta.value().is_finite() {
            return Err(BarmaError::NonFinite(format!("linear predictor at t={}", t + 1)));
        }
        let (m, hit) = link.inverse_scalar(eta);
        let r = if hit {
            T::constant(gy[t] - link.g(m.value()))
        } else {
            -eta + gy[t]
        };
        mu.push(m);
        resid.push(r);
        ar_terms.push(-xb_t + gy[t]);
        clamped.push(hit);
    }
    Ok((mu, resid, clamped))
}

pub(crate) fn check_inputs(
    series: &ObservationSeries,
    covariates: &CovariateMatrix,
    order: &ModelOrder,
) -> Result<()> {
    if covariates.n_cols() != order.r {
        return Err(BarmaError::Dimension(format!(
            "{} covariate columns supplied, order expects r={}",
            covariates.n_cols(),
            order.r
        )));
    }
    if order.r > 0 && covariates.n_rows() != series.len() {
        return Err(BarmaError::Dimension(format!(
            "{} covariate rows for {} observations",
            covariates.n_rows(),
            series.len()
        )));
    }
    Ok(())
}

/// Runs the mean recursion for all t and returns μ_t and r_t.
pub fn filter_recursion(
    params: &ParameterVector,
    series: &ObservationSeries,
    covariates: &CovariateMatrix,
    order: &ModelOrder,
    link: Link,
) -> Result<FilterOutput> {
    params.check_order(order)?;
    check_inputs(series, covariates, order)?;
    let gy: Vec<f64> = series.values().iter().map(|&y| link.g(y)).collect();
    let coefs = Coefs { alpha: params.alpha, beta: &params.beta, phi: &params.phi, theta: &params.theta };
    let (mu, resid, clamped) = run_filter(&coefs, &gy, covariates, link)?;
    Ok(FilterOutput {
        mu,
        resid,
        start_index: order.start_index(),
        n_clamped: clamped.iter().filter(|&&c| c).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::E;

    #[test]
    fn link_examples() {
        assert_eq!(Link::Logit.eval(0.5).unwrap(), 0.0);
        assert!((Link::Logit.eval(E / (1.0 + E)).unwrap() - 1.0).abs() < 1e-15);
        assert!(Link::Cloglog.eval(1.0 - (-1.0f64).exp()).unwrap().abs() < 1e-15);
        assert!(Link::Logit.eval(0.0).is_err());
        assert!(Link::Cloglog.eval(1.0).is_err());
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(Link::Logit.inverse(0.0).unwrap(), 0.5);
        assert!((Link::Logit.inverse(1.0).unwrap() - E / (1.0 + E)).abs() < 1e-15);
        assert!((Link::Logit.inverse(1.0).unwrap() - 0.731059).abs() < 1e-6);
        assert_eq!(Link::Logit.inverse(40.0).unwrap(), 1.0 - 1e-12);
        assert_eq!(Link::Logit.inverse(-40.0).unwrap(), 1e-12);
        assert!(Link::Logit.inverse(f64::NAN).is_err());
        assert!(Link::Cloglog.inverse(f64::INFINITY).is_err());
    }

    #[test]
    fn link_derivative_matches_difference_quotient() {
        for link in [Link::Logit, Link::Cloglog] {
            for &x in &[0.05, 0.3, 0.7, 0.95] {
                let h = 1e-6;
                let fd = (link.g(x + h) - link.g(x - h)) / (2.0 * h);
                let d = link.derivative(x).unwrap();
                assert!((fd - d).abs() < 1e-6 * d.abs());
            }
        }
    }

    #[test]
    fn beta_density_examples() {
        assert!(beta_log_density(0.3, 0.5, 2.0).unwrap().abs() < 1e-13);
        assert!((beta_log_density(0.5, 0.5, 4.0).unwrap() - 1.5f64.ln()).abs() < 1e-13);
        assert!(beta_log_density(0.0, 0.5, 2.0).is_err());
        assert!(beta_log_density(0.5, 1.0, 2.0).is_err());
        assert!(beta_log_density(0.5, 0.5, 0.0).is_err());
    }

    /// Composite Gauss-Legendre on a substituted variable; oracle for the
    /// normalisation check.
    fn integrate_density(mu: f64, nu: f64) -> f64 {
        // y = (1 - cos(πs))/2 clusters nodes at the endpoints.
        let nodes = [
            (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
            (-0.538_469_310_105_683, 0.478_628_670_499_366_5),
            (0.0, 0.568_888_888_888_888_9),
            (0.538_469_310_105_683, 0.478_628_670_499_366_5),
            (0.906_179_845_938_664, 0.236_926_885_056_189_1),
        ];
        let panels = 4000;
        let h = 1.0 / panels as f64;
        let mut total = 0.0;
        for k in 0..panels {
            let a = k as f64 * h;
            for &(x, w) in &nodes {
                let s = a + 0.5 * h * (x + 1.0);
                let y = 0.5 * (1.0 - (std::f64::consts::PI * s).cos());
                let jac = 0.5 * std::f64::consts::PI * (std::f64::consts::PI * s).sin();
                if y > 0.0 && y < 1.0 {
                    total += 0.5 * h * w * beta_log_density(y, mu, nu).unwrap().exp() * jac;
                }
            }
        }
        total
    }

    #[test]
    fn density_integrates_to_one() {
        assert!((integrate_density(0.3, 7.0) - 1.0).abs() < 1e-8);
        assert!((integrate_density(0.8, 25.0) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn variance_examples() {
        assert!((conditional_variance(0.5, 99.0).unwrap() - 0.0025).abs() < 1e-16);
        assert!((conditional_variance(0.2, 9.0).unwrap() - 0.016).abs() < 1e-16);
        assert!(conditional_variance(0.5, 1e6).unwrap() <= 1.0 / 4e6);
        assert!(conditional_variance(1.0, 1.0).is_err());
    }

    #[test]
    fn long_run_location_examples() {
        assert_eq!(long_run_location(0.5, &[]).unwrap(), 0.5);
        assert!((long_run_location(0.3, &[0.4]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(long_run_location(0.2, &[0.5, 0.5]), Err(BarmaError::Singular(_))));
    }

    fn series(values: &[f64]) -> ObservationSeries {
        ObservationSeries::new(values.to_vec()).unwrap()
    }

    #[test]
    fn series_rejects_endpoints() {
        assert!(ObservationSeries::new(vec![0.2, 1.0]).is_err());
        assert!(ObservationSeries::new(vec![0.0]).is_err());
        assert!(ObservationSeries::new(vec![]).is_err());
    }

    #[test]
    fn constant_mean_filter() {
        let y = series(&[0.2, 0.6, 0.9, 0.4]);
        let order = ModelOrder::new(0, 0, 0);
        let params = ParameterVector::new(5.0, 0.0, vec![], vec![], vec![]).unwrap();
        let out = filter_recursion(&params, &y, &CovariateMatrix::empty(4), &order, Link::Logit).unwrap();
        for (t, &yt) in y.values().iter().enumerate() {
            assert_eq!(out.mu[t], 0.5);
            assert!((out.resid[t] - Link::Logit.g(yt)).abs() < 1e-15);
        }
        assert_eq!(out.start_index, 0);
    }

    #[test]
    fn pure_persistence_filter() {
        let y = series(&[0.2, 0.6, 0.9, 0.4, 0.35]);
        let order = ModelOrder::new(1, 0, 0);
        let params = ParameterVector::new(5.0, 0.0, vec![], vec![1.0], vec![]).unwrap();
        let out = filter_recursion(&params, &y, &CovariateMatrix::empty(5), &order, Link::Logit).unwrap();
        assert_eq!(out.mu[0], 0.5);
        for t in 1..5 {
            let g_mu = Link::Logit.g(out.mu[t]);
            assert!((g_mu - Link::Logit.g(y.values()[t - 1])).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let y = series(&[0.2, 0.6]);
        let params = ParameterVector::new(5.0, 0.0, vec![], vec![0.3], vec![]).unwrap();
        let err = filter_recursion(&params, &y, &CovariateMatrix::empty(2), &ModelOrder::new(0, 1, 0), Link::Logit);
        assert!(matches!(err, Err(BarmaError::Dimension(_))));
        let x = CovariateMatrix::from_rows(&[vec![1.0]]).unwrap();
        let params = ParameterVector::new(5.0, 0.0, vec![0.1], vec![], vec![]).unwrap();
        let err = filter_recursion(&params, &y, &x, &ModelOrder::new(0, 0, 1), Link::Logit);
        assert!(matches!(err, Err(BarmaError::Dimension(_))));
    }

    #[test]
    fn divergent_parameters_are_non_finite() {
        let y = series(&[0.6, 0.7, 0.8]);
        let big = f64::MAX * 0.9;
        let params = ParameterVector::new(5.0, big, vec![], vec![big], vec![]).unwrap();
        let err = filter_recursion(&params, &y, &CovariateMatrix::empty(3), &ModelOrder::new(1, 0, 0), Link::Logit);
        assert!(matches!(err, Err(BarmaError::NonFinite(_))));
    }

    /// Straightforward double loop used as an oracle.
    fn naive_filter(params: &ParameterVector, y: &[f64], x: &[Vec<f64>], link: Link) -> (Vec<f64>, Vec<f64>) {
        let n = y.len();
        let mut mu = vec![0.0; n];
        let mut r = vec![0.0; n];
        for t in 0..n {
            let mut eta = params.alpha;
            for k in 0..params.beta.len() {
                eta += x[t][k] * params.beta[k];
            }
            for i in 1..=params.phi.len() {
                if t >= i {
                    let mut xb = 0.0;
                    for k in 0..params.beta.len() {
                        xb += x[t - i][k] * params.beta[k];
                    }
                    eta += params.phi[i - 1] * (link.g(y[t - i]) - xb);
                }
            }
            for j in 1..=params.theta.len() {
                if t >= j {
                    eta += params.theta[j - 1] * r[t - j];
                }
            }
            mu[t] = link.inverse(eta).unwrap();
            r[t] = link.g(y[t]) - eta;
        }
        (mu, r)
    }

    #[test]
    fn filter_matches_naive_loop() {
        use crate::simulate::RngStream;
        let mut rng = RngStream::new(11);
        for case in 0..20 {
            let p = case % 3;
            let q = (case / 3) % 3;
            let r = case % 2;
            let n = 20;
            let y: Vec<f64> = (0..n).map(|_| 0.05 + 0.9 * rng.uniform()).collect();
            let x: Vec<Vec<f64>> = (0..n).map(|_| (0..r).map(|_| rng.uniform() - 0.5).collect()).collect();
            let params = ParameterVector::new(
                10.0,
                rng.uniform() - 0.5,
                (0..r).map(|_| rng.uniform() - 0.5).collect(),
                (0..p).map(|_| 0.6 * (rng.uniform() - 0.5)).collect(),
                (0..q).map(|_| 0.6 * (rng.uniform() - 0.5)).collect(),
            )
            .unwrap();
            let cov = if r > 0 { CovariateMatrix::from_rows(&x).unwrap() } else { CovariateMatrix::empty(n) };
            for link in [Link::Logit, Link::Cloglog] {
                let out = filter_recursion(&params, &series(&y), &cov, &ModelOrder::new(p, q, r), link).unwrap();
                let (mu, res) = naive_filter(&params, &y, &x, link);
                for t in 0..n {
                    assert!((out.mu[t] - mu[t]).abs() < 1e-12);
                    assert!((out.resid[t] - res[t]).abs() < 1e-12);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn inverse_round_trip(x in 1e-6f64..(1.0 - 1e-6)) {
            for link in [Link::Logit, Link::Cloglog] {
                let back = link.inverse(link.eval(x).unwrap()).unwrap();
                prop_assert!((back - x).abs() < 1e-10, "{:?} {} {}", link, x, back);
            }
        }

        #[test]
        fn flatten_round_trip(nu in 0.01f64..1e4, alpha in -3.0f64..3.0, phi in proptest::collection::vec(-2.0f64..2.0, 0..4),
                              theta in proptest::collection::vec(-2.0f64..2.0, 0..4), beta in proptest::collection::vec(-2.0f64..2.0, 0..3)) {
            let pv = ParameterVector::new(nu, alpha, beta, phi, theta).unwrap();
            let back = ParameterVector::from_flat(&pv.flatten(), &pv.order()).unwrap();
            prop_assert_eq!(back, pv);
        }

        #[test]
        fn residual_reconstructs_mean(seed in 0u64..200, phi in -0.9f64..0.9, theta in -0.9f64..0.9, alpha in -1.0f64..1.0) {
            let mut rng = crate::simulate::RngStream::new(seed);
            let y: Vec<f64> = (0..30).map(|_| 0.02 + 0.96 * rng.uniform()).collect();
            let params = ParameterVector::new(20.0, alpha, vec![], vec![phi], vec![theta]).unwrap();
            let out = filter_recursion(&params, &series(&y), &CovariateMatrix::empty(30), &ModelOrder::new(1, 1, 0), Link::Logit).unwrap();
            for t in 0..30 {
                prop_assert!(out.mu[t] > 0.0 && out.mu[t] < 1.0);
                let lhs = out.resid[t] + Link::Logit.g(out.mu[t]);
                prop_assert!((lhs - Link::Logit.g(y[t])).abs() < 1e-9);
            }
        }

        #[test]
        fn intercept_shift(seed in 0u64..200, delta in -1.0f64..1.0, alpha in -1.0f64..1.0) {
            let mut rng = crate::simulate::RngStream::new(seed);
            let y: Vec<f64> = (0..15).map(|_| 0.05 + 0.9 * rng.uniform()).collect();
            let order = ModelOrder::new(0, 0, 0);
            let a = ParameterVector::new(20.0, alpha, vec![], vec![], vec![]).unwrap();
            let b = ParameterVector::new(20.0, alpha + delta, vec![], vec![], vec![]).unwrap();
            let cov = CovariateMatrix::empty(15);
            let fa = filter_recursion(&a, &series(&y), &cov, &order, Link::Logit).unwrap();
            let fb = filter_recursion(&b, &series(&y), &cov, &order, Link::Logit).unwrap();
            for t in 0..15 {
                let d = Link::Logit.g(fb.mu[t]) - Link::Logit.g(fa.mu[t]);
                prop_assert!((d - delta).abs() < 1e-12);
            }
        }
    }
}

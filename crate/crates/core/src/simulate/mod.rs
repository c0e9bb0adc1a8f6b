//! Random variates, βARMA data generation and the Monte Carlo study harness.

mod rng;
mod study;
mod variates;

pub use rng::RngStream;
pub use study::{mc_experiment, CellSummary, ReplicateRecord, StudyCell, StudyDesign, StudyReport};
pub use variates::{draw_beta, draw_gamma, draw_log_gamma};

use crate::error::{BarmaError, Result};
use crate::model::{Coefs, CovariateMatrix, Link, ModelOrder, ObservationSeries, ParameterVector};

/// Default number of discarded leading observations.
pub const DEFAULT_BURN_IN: usize = 50;

/// Longest run of boundary-clamped means tolerated during simulation.
const MAX_CLAMP_RUN: usize = 10;

/// A simulated series together with the conditional means that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSeries {
    pub series: ObservationSeries,
    pub mu: Vec<f64>,
}

/// Generates `n` observations from the βARMA recursion after discarding
/// `burn_in` leading values.
///
/// With `r > 0` the covariate matrix must hold `burn_in + n` rows; the
/// burn-in consumes the leading ones.
pub fn simulate_barma(
    params: &ParameterVector,
    order: &ModelOrder,
    link: Link,
    n: usize,
    burn_in: usize,
    covariates: &CovariateMatrix,
    rng: &mut RngStream,
) -> Result<SimulatedSeries> {
    params.check_order(order)?;
    if n == 0 {
        return Err(BarmaError::Domain("series length must be at least 1".into()));
    }
    let total = n + burn_in;
    if covariates.n_cols() != order.r {
        return Err(BarmaError::Dimension(format!(
            "{} covariate columns supplied, order expects r={}",
            covariates.n_cols(),
            order.r
        )));
    }
    if order.r > 0 && covariates.n_rows() < total {
        return Err(BarmaError::Dimension(format!(
            "{} covariate rows, simulation needs burn_in + n = {total}",
            covariates.n_rows()
        )));
    }

    let coefs = Coefs { alpha: params.alpha, beta: &params.beta, phi: &params.phi, theta: &params.theta };
    let mut ys = Vec::with_capacity(total);
    let mut mus = Vec::with_capacity(total);
    let mut resid = Vec::with_capacity(total);
    let mut ar_terms = Vec::with_capacity(total);
    let mut clamp_run = 0;
    for t in 0..total {
        let xb_t = if order.r > 0 { coefs.xb(covariates.row(t)) } else { 0.0 };
        let eta = coefs.eta(t, xb_t, &ar_terms, &resid);
        if !eta.is_finite() {
            return Err(BarmaError::NonFinite(format!("simulated linear predictor at t={}", t + 1)));
        }
        let (mu, hit) = link.inverse_scalar(eta);
        clamp_run = if hit { clamp_run + 1 } else { 0 };
        if clamp_run > MAX_CLAMP_RUN {
            return Err(BarmaError::NonFinite(format!(
                "simulated mean stuck at the boundary for {clamp_run} steps (t={})",
                t + 1
            )));
        }
        let y = draw_beta(mu, params.nu, rng);
        let gy = link.g(y);
        resid.push(if hit { gy - link.g(mu) } else { gy - eta });
        ar_terms.push(gy - xb_t);
        mus.push(mu);
        ys.push(y);
    }
    Ok(SimulatedSeries {
        series: ObservationSeries::new(ys.split_off(burn_in))?,
        mu: mus.split_off(burn_in),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::filter_recursion;

    fn params(nu: f64, alpha: f64, phi: Vec<f64>, theta: Vec<f64>) -> ParameterVector {
        ParameterVector::new(nu, alpha, vec![], phi, theta).unwrap()
    }

    #[test]
    fn iid_symmetric_mean() {
        let p = params(50.0, 0.0, vec![], vec![]);
        let order = ModelOrder::new(0, 0, 0);
        let mut rng = RngStream::new(11);
        let sim = simulate_barma(&p, &order, Link::Logit, 10_000, 50, &CovariateMatrix::empty(0), &mut rng).unwrap();
        let mean = sim.series.values().iter().sum::<f64>() / 10_000.0;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
        assert!(sim.mu.iter().all(|&m| m == 0.5));
    }

    #[test]
    fn replay_through_filter_reproduces_means() {
        for (link, seed) in [(Link::Logit, 1), (Link::Cloglog, 2)] {
            let p = params(30.0, -0.2, vec![0.5, -0.2], vec![0.3]);
            let order = ModelOrder::new(2, 1, 0);
            let mut rng = RngStream::new(seed);
            let sim = simulate_barma(&p, &order, link, 300, 0, &CovariateMatrix::empty(0), &mut rng).unwrap();
            let out = filter_recursion(&p, &sim.series, &CovariateMatrix::empty(300), &order, link).unwrap();
            assert_eq!(out.mu, sim.mu);
        }
    }

    #[test]
    fn replay_with_covariates() {
        let rows: Vec<Vec<f64>> = (0..120).map(|t| vec![(t as f64 / 10.0).sin()]).collect();
        let x = CovariateMatrix::from_rows(&rows).unwrap();
        let p = ParameterVector::new(40.0, 0.1, vec![0.8], vec![0.4], vec![]).unwrap();
        let order = ModelOrder::new(1, 0, 1);
        let sim = simulate_barma(&p, &order, Link::Logit, 120, 0, &x, &mut RngStream::new(3)).unwrap();
        let out = filter_recursion(&p, &sim.series, &x, &order, Link::Logit).unwrap();
        assert_eq!(out.mu, sim.mu);
    }

    #[test]
    fn seeded_runs_are_identical_and_interior() {
        let p = params(50.0, 0.0, vec![0.4], vec![0.4]);
        let order = ModelOrder::new(1, 1, 0);
        let empty = CovariateMatrix::empty(0);
        let a = simulate_barma(&p, &order, Link::Logit, 200, 50, &empty, &mut RngStream::new(5)).unwrap();
        let b = simulate_barma(&p, &order, Link::Logit, 200, 50, &empty, &mut RngStream::new(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.series.len(), 200);
        assert!(a.series.values().iter().all(|&y| y > 0.0 && y < 1.0));
    }

    #[test]
    fn runaway_recursion_is_reported() {
        let p = params(50.0, 30.0, vec![], vec![]);
        let r = simulate_barma(&p, &ModelOrder::new(0, 0, 0), Link::Logit, 50, 0, &CovariateMatrix::empty(0), &mut RngStream::new(1));
        assert!(matches!(r, Err(BarmaError::NonFinite(_))));
    }

    #[test]
    fn covariate_rows_must_cover_burn_in() {
        let x = CovariateMatrix::from_rows(&vec![vec![1.0]; 60]).unwrap();
        let p = ParameterVector::new(40.0, 0.1, vec![0.2], vec![], vec![]).unwrap();
        let r = simulate_barma(&p, &ModelOrder::new(0, 0, 1), Link::Logit, 20, 50, &x, &mut RngStream::new(1));
        assert!(matches!(r, Err(BarmaError::Dimension(_))));
    }
}

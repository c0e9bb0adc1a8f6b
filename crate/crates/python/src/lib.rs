//! Python bindings. Heavy work runs with the interpreter lock released.

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use barma::analysis::{ar_min_root_modulus, root_report_from_chains, summarize_draws, DEFAULT_THRESHOLDS};
use barma::forecast::predictive_draws;
use barma::sampler::run_chains;
use barma::select::{stepping_stone_log_ml, LadderSpec};
use barma::simulate::{simulate_barma, DEFAULT_BURN_IN};
use barma::{
    AlphaPrior, BarmaError, BarmaPosterior, ChainDraws, CovariateMatrix, Link, ModelOrder, ModelSpec,
    ObservationSeries, ParameterVector, PriorSpec, RngStream, SamplerConfig,
};

fn py_err(e: BarmaError) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn priors(nu_shape: f64, nu_rate: f64, prior_variance: f64, alpha_prior: &str) -> PyResult<PriorSpec> {
    let mut p = PriorSpec::with_normal_variance(nu_shape, nu_rate, prior_variance);
    p.alpha = match alpha_prior {
        "normal" => AlphaPrior::Normal { variance: prior_variance },
        "uniform" => AlphaPrior::Uniform,
        other => return Err(PyValueError::new_err(format!("alpha_prior must be normal or uniform, got {other:?}"))),
    };
    p.validate().map_err(py_err)?;
    Ok(p)
}

fn posterior(y: Vec<f64>, p: usize, q: usize, link: &str, priors: PriorSpec) -> PyResult<BarmaPosterior> {
    let series = ObservationSeries::new(y).map_err(py_err)?;
    let n = series.len();
    let spec = ModelSpec::new(ModelOrder::new(p, q, 0), Link::parse(link).map_err(py_err)?, priors);
    BarmaPosterior::new(series, CovariateMatrix::empty(n), spec).map_err(py_err)
}

/// Posterior draws from a fitted model.
#[pyclass(module = "barma", frozen)]
struct Fit {
    chains: Vec<ChainDraws>,
    order: ModelOrder,
    link: Link,
    series: ObservationSeries,
    #[pyo3(get)]
    names: Vec<String>,
}

#[pymethods]
impl Fit {
    /// Pooled draws, one list per draw in `names` order.
    fn draws(&self) -> Vec<Vec<f64>> {
        self.chains.iter().flat_map(|c| c.draws.iter().cloned()).collect()
    }

    /// Per-parameter dict of mean, sd, median, interval, ESS and R-hat.
    #[pyo3(signature = (level = 0.95))]
    fn summary(&self, py: Python<'_>, level: f64) -> PyResult<Vec<Py<PyAny>>> {
        let s = summarize_draws(&self.chains, &self.names, level).map_err(py_err)?;
        s.params
            .iter()
            .map(|p| {
                let d = pyo3::types::PyDict::new(py);
                d.set_item("name", &p.name)?;
                d.set_item("mean", p.mean)?;
                d.set_item("sd", p.sd)?;
                d.set_item("median", p.median)?;
                d.set_item("lower", p.lower)?;
                d.set_item("upper", p.upper)?;
                d.set_item("ess", p.ess)?;
                d.set_item("rhat", p.rhat)?;
                Ok(d.into_any().unbind())
            })
            .collect()
    }

    /// Posterior probability that the smallest AR root modulus is below each
    /// threshold.
    #[pyo3(signature = (thresholds = None))]
    fn unit_root(&self, thresholds: Option<Vec<f64>>) -> PyResult<Vec<(f64, f64)>> {
        let thresholds = thresholds.unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec());
        let r = root_report_from_chains(&self.chains, &self.order, &thresholds).map_err(py_err)?;
        Ok(r.thresholds.into_iter().zip(r.probabilities).collect())
    }

    /// Posterior predictive mean and interval for steps 1..=h.
    #[pyo3(signature = (h, level = 0.95, seed = 1))]
    fn forecast(&self, py: Python<'_>, h: usize, level: f64, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let empty = CovariateMatrix::empty(self.series.len());
        let r = py
            .detach(|| predictive_draws(&self.chains, &self.series, &empty, &self.order, self.link, h, level, seed))
            .map_err(py_err)?;
        Ok((r.summary.mean, r.summary.lower, r.summary.upper))
    }
}

/// Simulates a series; returns (y, mu).
#[pyfunction]
#[pyo3(signature = (nu, alpha, phi = vec![], theta = vec![], n = 500, burn_in = DEFAULT_BURN_IN, link = "logit", seed = 1))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    nu: f64,
    alpha: f64,
    phi: Vec<f64>,
    theta: Vec<f64>,
    n: usize,
    burn_in: usize,
    link: &str,
    seed: u64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let params = ParameterVector::new(nu, alpha, vec![], phi, theta).map_err(py_err)?;
    let link = Link::parse(link).map_err(py_err)?;
    let sim = simulate_barma(&params, &params.order(), link, n, burn_in, &CovariateMatrix::empty(0), &mut RngStream::new(seed))
        .map_err(py_err)?;
    Ok((sim.series.values().to_vec(), sim.mu))
}

/// Samples the posterior of a βARMA(p, q) model with NUTS.
#[pyfunction]
#[pyo3(signature = (
    y, p = 0, q = 0, link = "logit", chains = 2, iterations = 2000, warmup = 0.5, seed = 1,
    nu_shape = 5.0, nu_rate = 0.1, prior_variance = 4e8, alpha_prior = "normal"
))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    y: Vec<f64>,
    p: usize,
    q: usize,
    link: &str,
    chains: usize,
    iterations: usize,
    warmup: f64,
    seed: u64,
    nu_shape: f64,
    nu_rate: f64,
    prior_variance: f64,
    alpha_prior: &str,
) -> PyResult<Fit> {
    let post = posterior(y, p, q, link, priors(nu_shape, nu_rate, prior_variance, alpha_prior)?)?;
    let config = SamplerConfig { n_chains: chains, n_iterations: iterations, warmup_fraction: warmup, seed, ..Default::default() };
    let set = py.detach(|| run_chains(&post, &config)).map_err(py_err)?;
    let order = post.spec().order;
    Ok(Fit {
        chains: set.chains,
        order,
        link: post.spec().link,
        series: post.series().clone(),
        names: ParameterVector::names(&order),
    })
}

/// Stepping-stone log marginal likelihood; returns (log_ml, std_error).
#[pyfunction]
#[pyo3(signature = (
    y, p = 0, q = 0, link = "logit", rungs = 30, exponent = 5.0, rung_warmup = 250, rung_draws = 1000, seed = 1,
    nu_shape = 5.0, nu_rate = 0.1, prior_variance = 1.0, alpha_prior = "normal"
))]
#[allow(clippy::too_many_arguments)]
fn log_marginal_likelihood(
    py: Python<'_>,
    y: Vec<f64>,
    p: usize,
    q: usize,
    link: &str,
    rungs: usize,
    exponent: f64,
    rung_warmup: usize,
    rung_draws: usize,
    seed: u64,
    nu_shape: f64,
    nu_rate: f64,
    prior_variance: f64,
    alpha_prior: &str,
) -> PyResult<(f64, f64)> {
    let post = posterior(y, p, q, link, priors(nu_shape, nu_rate, prior_variance, alpha_prior)?)?;
    let ladder = LadderSpec::power(rungs, exponent).map_err(py_err)?.with_budget(rung_warmup, rung_draws);
    let ml = py.detach(|| stepping_stone_log_ml(&post, &ladder, seed)).map_err(py_err)?;
    Ok((ml.log_ml, ml.std_error))
}

/// Smallest modulus among the roots of 1 − φ₁z − … − φ_p z^p.
#[pyfunction]
fn min_root_modulus(phi: Vec<f64>) -> PyResult<f64> {
    ar_min_root_modulus(&phi).map_err(py_err)
}

#[pymodule]
#[pyo3(name = "barma")]
fn barma_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Fit>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(log_marginal_likelihood, m)?)?;
    m.add_function(wrap_pyfunction!(min_root_modulus, m)?)?;
    Ok(())
}

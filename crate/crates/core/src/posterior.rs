//! Partial likelihood, priors and the unconstrained log posterior with its
//! exact gradient.
//!
//! The sampler works on ζ = log ν so that every coordinate is unconstrained.
//! The gradient is obtained by pushing [`Dual`] numbers through the same
//! recursion that produces the value.

use std::f64::consts::PI;

use crate::dual::{Dual, Scalar};
use crate::error::{BarmaError, Result};
use crate::model::{
    beta_log_density_scalar, check_inputs, run_filter, Coefs, CovariateMatrix, Link, ModelOrder,
    ObservationSeries, ParameterVector,
};
use crate::sampler::LogDensity;
use crate::select::PowerPosteriorTarget;
use crate::simulate::{draw_log_gamma, RngStream};
use crate::special::ln_gamma;

/// Variance used for the "non-informative" normal priors.
pub const FLAT_VARIANCE: f64 = 20_000.0 * 20_000.0;

/// Fraction of likelihood terms allowed to sit on the μ clamp before the
/// likelihood is declared −∞.
pub const MAX_CLAMPED_FRACTION: f64 = 0.10;

/// Prior on the intercept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaPrior {
    Normal { variance: f64 },
    /// Uniform on (−1, 1).
    Uniform,
}

/// Gamma prior on ν and independent zero-mean normals on the regression terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub nu_shape: f64,
    pub nu_rate: f64,
    pub alpha: AlphaPrior,
    pub sigma2_beta: f64,
    pub sigma2_phi: f64,
    pub sigma2_theta: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            nu_shape: 5.0,
            nu_rate: 0.1,
            alpha: AlphaPrior::Normal { variance: FLAT_VARIANCE },
            sigma2_beta: FLAT_VARIANCE,
            sigma2_phi: FLAT_VARIANCE,
            sigma2_theta: FLAT_VARIANCE,
        }
    }
}

impl PriorSpec {
    /// Same normal variance for α, β, φ and θ.
    pub fn with_normal_variance(nu_shape: f64, nu_rate: f64, variance: f64) -> Self {
        Self {
            nu_shape,
            nu_rate,
            alpha: AlphaPrior::Normal { variance },
            sigma2_beta: variance,
            sigma2_phi: variance,
            sigma2_theta: variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(BarmaError::Domain(format!("prior {name} must be positive and finite, got {v}")))
            }
        };
        positive("nu_shape", self.nu_shape)?;
        positive("nu_rate", self.nu_rate)?;
        if let AlphaPrior::Normal { variance } = self.alpha {
            positive("alpha variance", variance)?;
        }
        positive("beta variance", self.sigma2_beta)?;
        positive("phi variance", self.sigma2_phi)?;
        positive("theta variance", self.sigma2_theta)
    }

    /// Prior mean of ν.
    pub fn nu_mean(&self) -> f64 {
        self.nu_shape / self.nu_rate
    }

    /// Largest normal prior variance in use.
    pub fn max_variance(&self) -> f64 {
        let a = match self.alpha {
            AlphaPrior::Normal { variance } => variance,
            AlphaPrior::Uniform => 0.0,
        };
        a.max(self.sigma2_beta).max(self.sigma2_phi).max(self.sigma2_theta)
    }
}

/// Gamma(a, b) hyper-parameters with the given mean and variance.
pub fn gamma_prior_from_mean_var(mean: f64, variance: f64) -> Result<(f64, f64)> {
    if !(mean > 0.0) || !(variance > 0.0) {
        return Err(BarmaError::Domain(format!(
            "mean ({mean}) and variance ({variance}) must be positive"
        )));
    }
    Ok((mean * mean / variance, mean / variance))
}

/// Model orders, link and priors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub order: ModelOrder,
    pub link: Link,
    pub priors: PriorSpec,
}

impl ModelSpec {
    pub fn new(order: ModelOrder, link: Link, priors: PriorSpec) -> Self {
        Self { order, link, priors }
    }
}

/// Coordinates (ζ = log ν, α, β, φ, θ).
#[derive(Debug, Clone, PartialEq)]
pub struct UnconstrainedPoint(pub Vec<f64>);

impl UnconstrainedPoint {
    pub fn from_params(params: &ParameterVector) -> Self {
        let mut v = params.flatten();
        v[0] = v[0].ln();
        Self(v)
    }

    pub fn to_params(&self, order: &ModelOrder) -> Result<ParameterVector> {
        let mut v = self.0.clone();
        if v.is_empty() {
            return Err(BarmaError::Dimension("empty point".into()));
        }
        v[0] = v[0].exp();
        ParameterVector::from_flat(&v, order)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[inline]
fn normal_log_density<T: Scalar>(x: T, variance: f64) -> T {
    x * x * (-0.5 / variance) - 0.5 * (2.0 * PI * variance).ln()
}

/// Σ_{t>m} log p(y_t | μ_t, ν) with μ from the recursion.
pub fn log_partial_likelihood(
    params: &ParameterVector,
    series: &ObservationSeries,
    covariates: &CovariateMatrix,
    order: &ModelOrder,
    link: Link,
) -> Result<f64> {
    params.validate()?;
    params.check_order(order)?;
    let spec = ModelSpec::new(*order, link, PriorSpec::default());
    let post = BarmaPosterior::new(series.clone(), covariates.clone(), spec)?;
    let x = UnconstrainedPoint::from_params(params);
    Ok(post.evaluate::<f64>(&x.0).1)
}

/// Log prior density at γ (constrained scale, no Jacobian).
pub fn log_prior(params: &ParameterVector, priors: &PriorSpec) -> f64 {
    let nu = params.nu;
    if !(nu > 0.0) {
        return f64::NEG_INFINITY;
    }
    let (a, b) = (priors.nu_shape, priors.nu_rate);
    let mut lp = a * b.ln() - ln_gamma(a) + (a - 1.0) * nu.ln() - b * nu;
    lp += match priors.alpha {
        AlphaPrior::Normal { variance } => normal_log_density(params.alpha, variance),
        AlphaPrior::Uniform => {
            if params.alpha.abs() < 1.0 {
                -(2.0f64.ln())
            } else {
                return f64::NEG_INFINITY;
            }
        }
    };
    lp += params.beta.iter().map(|&v| normal_log_density(v, priors.sigma2_beta)).sum::<f64>();
    lp += params.phi.iter().map(|&v| normal_log_density(v, priors.sigma2_phi)).sum::<f64>();
    lp += params.theta.iter().map(|&v| normal_log_density(v, priors.sigma2_theta)).sum::<f64>();
    lp
}

/// Unconstrained log posterior (up to the marginal likelihood) at `point`.
pub fn log_posterior_unconstrained(
    point: &UnconstrainedPoint,
    series: &ObservationSeries,
    covariates: &CovariateMatrix,
    priors: &PriorSpec,
    order: &ModelOrder,
    link: Link,
) -> Result<f64> {
    let post = BarmaPosterior::new(series.clone(), covariates.clone(), ModelSpec::new(*order, link, *priors))?;
    post.log_posterior(point.as_slice())
}

/// Gradient of [`log_posterior_unconstrained`].
pub fn grad_log_posterior(
    point: &UnconstrainedPoint,
    series: &ObservationSeries,
    covariates: &CovariateMatrix,
    priors: &PriorSpec,
    order: &ModelOrder,
    link: Link,
) -> Result<Vec<f64>> {
    let post = BarmaPosterior::new(series.clone(), covariates.clone(), ModelSpec::new(*order, link, *priors))?;
    post.gradient(point.as_slice()).map(|(_, g)| g)
}

/// Log posterior of a βARMA model bound to one data set.
///
/// Immutable after construction, so one instance can be shared by all chains.
#[derive(Debug, Clone)]
pub struct BarmaPosterior {
    series: ObservationSeries,
    covariates: CovariateMatrix,
    spec: ModelSpec,
    gy: Vec<f64>,
    ln_y: Vec<f64>,
    ln_1my: Vec<f64>,
    fixed_nu: Option<f64>,
}

impl BarmaPosterior {
    pub fn new(series: ObservationSeries, covariates: CovariateMatrix, spec: ModelSpec) -> Result<Self> {
        spec.priors.validate()?;
        let covariates = if spec.order.r == 0 && covariates.n_cols() == 0 {
            CovariateMatrix::empty(series.len())
        } else {
            covariates
        };
        check_inputs(&series, &covariates, &spec.order)?;
        if series.len() <= spec.order.start_index() {
            return Err(BarmaError::Insufficient(format!(
                "{} observations cannot support max(p,q)={}",
                series.len(),
                spec.order.start_index()
            )));
        }
        let link = spec.link;
        let gy = series.values().iter().map(|&y| link.g(y)).collect();
        let ln_y = series.values().iter().map(|y| y.ln()).collect();
        let ln_1my = series.values().iter().map(|&y| (-y).ln_1p()).collect();
        Ok(Self { series, covariates, spec, gy, ln_y, ln_1my, fixed_nu: None })
    }

    /// Treats ν as known; ζ is dropped from the coordinates.
    pub fn with_fixed_nu(mut self, nu: f64) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(BarmaError::Domain(format!("fixed nu={nu} must be positive")));
        }
        self.fixed_nu = Some(nu);
        Ok(self)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn series(&self) -> &ObservationSeries {
        &self.series
    }

    pub fn covariates(&self) -> &CovariateMatrix {
        &self.covariates
    }

    pub fn fixed_nu(&self) -> Option<f64> {
        self.fixed_nu
    }

    /// Number of sampled coordinates.
    pub fn dim(&self) -> usize {
        self.spec.order.dim() - usize::from(self.fixed_nu.is_some())
    }

    /// Maps sampler coordinates to γ.
    pub fn to_params(&self, x: &[f64]) -> Result<ParameterVector> {
        self.check_len(x)?;
        let mut flat = Vec::with_capacity(self.spec.order.dim());
        match self.fixed_nu {
            Some(nu) => {
                flat.push(nu);
                flat.extend_from_slice(x);
            }
            None => {
                flat.push(x[0].exp());
                flat.extend_from_slice(&x[1..]);
            }
        }
        ParameterVector::from_flat(&flat, &self.spec.order)
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(BarmaError::Dimension(format!(
                "point has {} coordinates, model has {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// (log prior including the log-ν Jacobian, log partial likelihood).
    pub(crate) fn evaluate<T: Scalar>(&self, x: &[T]) -> (T, T) {
        let order = &self.spec.order;
        let priors = &self.spec.priors;
        let (nu, rest, mut prior) = match self.fixed_nu {
            Some(nu) => (T::constant(nu), x, T::constant(0.0)),
            None => {
                let zeta = x[0];
                let (a, b) = (priors.nu_shape, priors.nu_rate);
                // Gamma(a, b) on ν = e^ζ plus the Jacobian ζ.
                let lp = zeta * a - zeta.exp() * b + (a * b.ln() - ln_gamma(a));
                (zeta.exp(), &x[1..], lp)
            }
        };
        let alpha = rest[0];
        let beta = &rest[1..1 + order.r];
        let phi = &rest[1 + order.r..1 + order.r + order.p];
        let theta = &rest[1 + order.r + order.p..];

        prior = prior
            + match priors.alpha {
                AlphaPrior::Normal { variance } => normal_log_density(alpha, variance),
                AlphaPrior::Uniform => {
                    if alpha.value().abs() < 1.0 {
                        T::constant(-(2.0f64.ln()))
                    } else {
                        return (T::constant(f64::NEG_INFINITY), T::constant(f64::NEG_INFINITY));
                    }
                }
            };
        for &b in beta {
            prior = prior + normal_log_density(b, priors.sigma2_beta);
        }
        for &p in phi {
            prior = prior + normal_log_density(p, priors.sigma2_phi);
        }
        for &t in theta {
            prior = prior + normal_log_density(t, priors.sigma2_theta);
        }

        let neg_inf = T::constant(f64::NEG_INFINITY);
        if !nu.value().is_finite() || !(nu.value() > 0.0) {
            return (prior, neg_inf);
        }
        let coefs = Coefs { alpha, beta, phi, theta };
        let Ok((mu, _, clamped)) = run_filter(&coefs, &self.gy, &self.covariates, self.spec.link) else {
            return (prior, neg_inf);
        };
        let m = order.start_index();
        let n_terms = mu.len() - m;
        let n_clamped = clamped[m..].iter().filter(|&&c| c).count();
        if n_clamped as f64 > MAX_CLAMPED_FRACTION * n_terms as f64 {
            return (prior, neg_inf);
        }
        let ln_gamma_nu = nu.ln_gamma();
        let mut lik = T::constant(0.0);
        for t in m..mu.len() {
            lik = lik + beta_log_density_scalar(self.ln_y[t], self.ln_1my[t], mu[t], nu, ln_gamma_nu);
        }
        if !lik.value().is_finite() {
            return (prior, neg_inf);
        }
        (prior, lik)
    }

    /// Log posterior at sampler coordinates; −∞ outside the support.
    pub fn log_posterior(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        let (prior, lik) = self.evaluate::<f64>(x);
        Ok(prior + lik)
    }

    /// (log prior with Jacobian, log likelihood) at sampler coordinates.
    pub fn log_parts(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.check_len(x)?;
        Ok(self.evaluate::<f64>(x))
    }

    /// Log posterior and its exact gradient.
    pub fn gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_len(x)?;
        let mut grad = vec![0.0; x.len()];
        let (prior, lik) = self.parts_grad(x, 1.0, &mut grad);
        let lp = prior + lik;
        if !lp.is_finite() {
            return Err(BarmaError::NonFinite("log posterior".into()));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(BarmaError::NonFinite("gradient (divergent parameters)".into()));
        }
        Ok((lp, grad))
    }

    /// Writes ∇(prior + temperature·likelihood) into `grad`; returns the parts.
    pub(crate) fn parts_grad(&self, x: &[f64], temperature: f64, grad: &mut [f64]) -> (f64, f64) {
        match x.len() {
            0..=2 => self.parts_grad_chunked::<2>(x, temperature, grad),
            3..=4 => self.parts_grad_chunked::<4>(x, temperature, grad),
            _ => self.parts_grad_chunked::<8>(x, temperature, grad),
        }
    }

    fn parts_grad_chunked<const N: usize>(&self, x: &[f64], temperature: f64, grad: &mut [f64]) -> (f64, f64) {
        let d = x.len();
        let mut out = (0.0, 0.0);
        let mut start = 0;
        while start < d {
            let end = (start + N).min(d);
            let xs: Vec<Dual<N>> = x
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    if (start..end).contains(&i) {
                        Dual::variable(v, i - start)
                    } else {
                        Dual::constant(v)
                    }
                })
                .collect();
            let (prior, lik) = self.evaluate(&xs);
            for i in start..end {
                let gl = if lik.re.is_finite() { lik.eps[i - start] } else { 0.0 };
                grad[i] = prior.eps[i - start] + temperature * gl;
            }
            out = (prior.re, lik.re);
            start = end;
        }
        out
    }

    fn start_point(&self, rng: &mut RngStream) -> Vec<f64> {
        let mut x: Vec<f64> = (0..self.dim()).map(|_| rng.uniform_range(-0.5, 0.5)).collect();
        if self.fixed_nu.is_none() {
            x[0] = self.spec.priors.nu_mean().ln();
        }
        x
    }

    fn constrained(&self, x: &[f64]) -> Vec<f64> {
        match self.fixed_nu {
            Some(nu) => std::iter::once(nu).chain(x.iter().copied()).collect(),
            None => std::iter::once(x[0].exp()).chain(x[1..].iter().copied()).collect(),
        }
    }
}

impl LogDensity for BarmaPosterior {
    fn dim(&self) -> usize {
        BarmaPosterior::dim(self)
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let (prior, lik) = self.parts_grad(x, 1.0, grad);
        prior + lik
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let (prior, lik) = self.evaluate::<f64>(x);
        prior + lik
    }

    fn initial_point(&self, rng: &mut RngStream) -> Vec<f64> {
        self.start_point(rng)
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        self.constrained(x)
    }
}

impl PowerPosteriorTarget for BarmaPosterior {
    fn dim(&self) -> usize {
        BarmaPosterior::dim(self)
    }

    fn log_parts_grad(&self, x: &[f64], temperature: f64, grad: &mut [f64]) -> (f64, f64) {
        self.parts_grad(x, temperature, grad)
    }

    fn log_likelihood(&self, x: &[f64]) -> f64 {
        self.evaluate::<f64>(x).1
    }

    fn sample_prior(&self, rng: &mut RngStream) -> Option<Vec<f64>> {
        let priors = &self.spec.priors;
        let order = &self.spec.order;
        let mut x = Vec::with_capacity(self.dim());
        if self.fixed_nu.is_none() {
            x.push(draw_log_gamma(priors.nu_shape, rng) - priors.nu_rate.ln());
        }
        x.push(match priors.alpha {
            AlphaPrior::Normal { variance } => variance.sqrt() * rng.normal(),
            AlphaPrior::Uniform => rng.uniform_range(-1.0, 1.0),
        });
        for (count, var) in [(order.r, priors.sigma2_beta), (order.p, priors.sigma2_phi), (order.q, priors.sigma2_theta)] {
            x.extend((0..count).map(|_| var.sqrt() * rng.normal()));
        }
        Some(x)
    }

    fn initial_point(&self, rng: &mut RngStream) -> Vec<f64> {
        self.start_point(rng)
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        self.constrained(x)
    }
}

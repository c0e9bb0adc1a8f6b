//! Marginal likelihoods by stepping-stone sampling and Bayes-factor order selection.

use rayon::prelude::*;

use crate::error::{BarmaError, Result};
use crate::model::{CovariateMatrix, Link, ModelOrder, ObservationSeries};
use crate::posterior::{BarmaPosterior, ModelSpec, PriorSpec};
use crate::sampler::{effective_sample_size, run_chain, ChainStart, LogDensity, SamplerConfig};
use crate::simulate::RngStream;

/// A posterior whose likelihood can be tempered: π₀(x)·L(x)^t.
pub trait PowerPosteriorTarget: Sync {
    fn dim(&self) -> usize;

    /// Writes ∇(log π₀ + t·log L) into `grad`; returns (log π₀, log L).
    fn log_parts_grad(&self, x: &[f64], temperature: f64, grad: &mut [f64]) -> (f64, f64);

    fn log_likelihood(&self, x: &[f64]) -> f64;

    fn initial_point(&self, rng: &mut RngStream) -> Vec<f64> {
        (0..self.dim()).map(|_| rng.uniform_range(-0.5, 0.5)).collect()
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    /// An exact draw from the prior, when one is available. The first rung
    /// then uses independent draws instead of a Markov chain.
    fn sample_prior(&self, _rng: &mut RngStream) -> Option<Vec<f64>> {
        None
    }
}

/// π₀·L^t viewed as a plain log density.
pub struct Tempered<'a, T: ?Sized> {
    pub target: &'a T,
    pub temperature: f64,
}

impl<T: PowerPosteriorTarget + ?Sized> LogDensity for Tempered<'_, T> {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let (prior, lik) = self.target.log_parts_grad(x, self.temperature, grad);
        if self.temperature == 0.0 {
            prior
        } else {
            prior + self.temperature * lik
        }
    }

    fn initial_point(&self, rng: &mut RngStream) -> Vec<f64> {
        self.target.initial_point(rng)
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        self.target.constrain(x)
    }
}

/// Temperature ladder and per-rung sampling budget.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderSpec {
    temperatures: Vec<f64>,
    pub warmup: usize,
    pub draws: usize,
    pub target_accept: f64,
    pub max_depth: usize,
}

impl Default for LadderSpec {
    fn default() -> Self {
        Self::power(30, 5.0).expect("valid default ladder")
    }
}

impl LadderSpec {
    /// t_k = (k/K)^exponent, k = 0..K.
    pub fn power(k: usize, exponent: f64) -> Result<Self> {
        if k == 0 || !(exponent > 0.0) {
            return Err(BarmaError::Domain("ladder needs K ≥ 1 and a positive exponent".into()));
        }
        let temps = (0..=k).map(|i| (i as f64 / k as f64).powf(exponent)).collect();
        Self::from_temperatures(temps)
    }

    pub fn from_temperatures(temperatures: Vec<f64>) -> Result<Self> {
        let ok = temperatures.len() >= 2
            && temperatures[0] == 0.0
            && *temperatures.last().unwrap() == 1.0
            && temperatures.windows(2).all(|w| w[1] > w[0]);
        if !ok {
            return Err(BarmaError::Domain("temperatures must increase strictly from 0 to 1".into()));
        }
        Ok(Self { temperatures, warmup: 250, draws: 1000, target_accept: 0.8, max_depth: 10 })
    }

    pub fn with_budget(mut self, warmup: usize, draws: usize) -> Self {
        self.warmup = warmup;
        self.draws = draws;
        self
    }

    pub fn temperatures(&self) -> &[f64] {
        &self.temperatures
    }

    /// Number of steps K.
    pub fn len(&self) -> usize {
        self.temperatures.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn sampler_config(&self, seed: u64) -> SamplerConfig {
        let total = self.warmup + self.draws;
        SamplerConfig {
            n_chains: 1,
            n_iterations: total,
            warmup_fraction: self.warmup as f64 / total as f64,
            target_accept: self.target_accept,
            max_depth: self.max_depth,
            seed,
        }
    }
}

/// One stepping-stone ratio estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct RungEstimate {
    pub t_from: f64,
    pub t_to: f64,
    pub log_ratio: f64,
    pub std_error: f64,
    /// Effective size of the importance weights.
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalLikelihood {
    pub log_ml: f64,
    pub std_error: f64,
    pub rungs: Vec<RungEstimate>,
}

/// log of the mean of exp(Δ·ℓᵢ) and its delta-method standard error. `iid`
/// draws skip the autocorrelation-based effective size.
fn rung_estimate(log_liks: &[f64], delta: f64, iid: bool) -> (f64, f64, f64) {
    let scaled: Vec<f64> = log_liks.iter().map(|&l| if l == f64::NEG_INFINITY { l } else { delta * l }).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return (f64::NAN, f64::NAN, 0.0);
    }
    let w: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let ess = if iid { n } else { effective_sample_size(&[&w]).unwrap_or(n).min(n) };
    let se = if var > 0.0 { (var / ess).sqrt() / mean } else { 0.0 };
    (max + mean.ln(), se, ess)
}

/// Upper bound on exact prior draws at the first rung.
const MAX_PRIOR_DRAWS: usize = 2_000_000;

/// Exact prior draws with their log-likelihoods, or `None` when the target
/// cannot sample its prior. Diffuse priors put most draws where the
/// likelihood is zero, so batches of `batch` are added until `batch / 2`
/// draws have finite likelihood (or the cap is hit); zeros stay in the sample,
/// which keeps the mean of L^t unbiased.
fn exact_prior_draws<T: PowerPosteriorTarget + ?Sized>(
    target: &T,
    batch: usize,
    rng: &mut RngStream,
) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut positions = Vec::new();
    let mut log_liks = Vec::new();
    let mut finite = 0;
    while finite < batch.div_ceil(2) && positions.len() < MAX_PRIOR_DRAWS {
        for _ in 0..batch {
            let x = target.sample_prior(rng)?;
            let ll = target.log_likelihood(&x);
            if ll.is_finite() {
                finite += 1;
                positions.push(x);
            } else {
                // Keep the count without storing a position that is never used.
                positions.push(Vec::new());
            }
            log_liks.push(ll);
        }
    }
    Some((positions, log_liks))
}

/// Stepping-stone estimate of log ∫ L dπ₀.
///
/// Rung k samples π₀·L^{t_k} and estimates log E[L^{t_{k+1}−t_k}]; the rungs
/// run in sequence, each starting from the final state and step size of the
/// previous one. The reported standard error combines rung-wise delta-method
/// variances, using the effective size of each rung's importance weights.
pub fn stepping_stone_log_ml<T: PowerPosteriorTarget + ?Sized>(
    target: &T,
    ladder: &LadderSpec,
    seed: u64,
) -> Result<MarginalLikelihood> {
    let temps = ladder.temperatures();
    let master = RngStream::new(seed);
    let mut start = ChainStart::default();
    let mut rungs = Vec::with_capacity(ladder.len());
    for k in 0..ladder.len() {
        let (t, t_next) = (temps[k], temps[k + 1]);
        let mut rng = master.split(k as u64);
        let exact = if t == 0.0 { exact_prior_draws(target, ladder.draws, &mut rng) } else { None };
        let iid = exact.is_some();
        let (positions, log_liks) = match exact {
            Some(pair) => pair,
            None => {
                let tempered = Tempered { target, temperature: t };
                let chain = run_chain(&tempered, &ladder.sampler_config(rng.seed()), 0, &mut rng, &start)
                    .map_err(|e| BarmaError::Sampler(format!("rung {k} (t={t:.3e}): {e}")))?;
                start.step_size = Some(chain.step_size);
                let log_liks = chain.unconstrained.iter().map(|x| target.log_likelihood(x)).collect();
                (chain.unconstrained, log_liks)
            }
        };
        // Hand the best-supported point to the next rung when coming from
        // prior draws; otherwise continue from the chain's last state.
        start.position = if t == 0.0 {
            positions
                .iter()
                .zip(&log_liks)
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(x, _)| x.clone())
        } else {
            positions.last().cloned()
        };
        let (log_ratio, std_error, ess) = rung_estimate(&log_liks, t_next - t, iid);
        if !log_ratio.is_finite() {
            if iid {
                return Err(BarmaError::NonFinite(format!(
                    "none of {} prior draws has finite likelihood; the prior is too diffuse for stepping-stone estimation",
                    log_liks.len()
                )));
            }
            return Err(BarmaError::NonFinite(format!("stepping-stone rung {k} (t={t:.3e}) has no finite likelihood")));
        }
        rungs.push(RungEstimate { t_from: t, t_to: t_next, log_ratio, std_error, ess });
    }
    let log_ml = rungs.iter().map(|r| r.log_ratio).sum();
    let std_error = rungs.iter().map(|r| r.std_error.powi(2)).sum::<f64>().sqrt();
    Ok(MarginalLikelihood { log_ml, std_error, rungs })
}

/// log BF of model a against model b.
pub fn log_bayes_factor(log_ml_a: f64, log_ml_b: f64) -> f64 {
    log_ml_a - log_ml_b
}

/// Prior variances at or above this are considered diffuse enough to
/// destabilize Bayes factors.
pub const DIFFUSE_VARIANCE: f64 = 1e4;

/// A warning when the normal priors are so wide that Bayes factors mostly
/// reflect the prior width.
pub fn prior_width_warning(priors: &PriorSpec) -> Option<String> {
    let v = priors.max_variance();
    (v >= DIFFUSE_VARIANCE).then(|| {
        format!(
            "prior variance {v:e} is very diffuse; Bayes factors are sensitive to prior width \
             (Lindley-Bartlett effect)"
        )
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionEntry {
    pub p: usize,
    pub q: usize,
    pub log_ml: Option<f64>,
    pub std_error: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub entries: Vec<SelectionEntry>,
    /// Index into `entries` of the largest log marginal likelihood.
    pub selected: usize,
    pub warnings: Vec<String>,
}

impl SelectionReport {
    /// Ranks externally computed (p, q, log-ML) values.
    pub fn from_log_mls(values: &[(usize, usize, f64)]) -> Result<Self> {
        let entries = values
            .iter()
            .map(|&(p, q, ml)| SelectionEntry { p, q, log_ml: Some(ml), std_error: None, error: None })
            .collect();
        Self::rank(entries, Vec::new())
    }

    fn rank(entries: Vec<SelectionEntry>, warnings: Vec<String>) -> Result<Self> {
        let selected = entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.log_ml.filter(|v| v.is_finite()).map(|v| (i, v)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .ok_or_else(|| BarmaError::Sampler("no order in the grid produced a marginal likelihood".into()))?;
        Ok(Self { entries, selected, warnings })
    }

    pub fn selected_order(&self) -> (usize, usize) {
        let e = &self.entries[self.selected];
        (e.p, e.q)
    }

    /// log BF of entry i against entry j, when both succeeded.
    pub fn log_bayes_factor(&self, i: usize, j: usize) -> Option<f64> {
        Some(log_bayes_factor(self.entries[i].log_ml?, self.entries[j].log_ml?))
    }
}

/// Estimates the log marginal likelihood of every (p, q) in `grid` (in
/// parallel) and selects the largest. Per-order failures are recorded.
pub fn order_search(
    series: &ObservationSeries,
    covariates: &CovariateMatrix,
    grid: &[(usize, usize)],
    link: Link,
    priors: &PriorSpec,
    ladder: &LadderSpec,
    seed: u64,
) -> Result<SelectionReport> {
    if grid.is_empty() {
        return Err(BarmaError::Domain("order grid is empty".into()));
    }
    priors.validate()?;
    let r = covariates.n_cols();
    let master = RngStream::new(seed);
    let entries: Vec<SelectionEntry> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &(p, q))| {
            let spec = ModelSpec::new(ModelOrder::new(p, q, r), link, *priors);
            let fit = BarmaPosterior::new(series.clone(), covariates.clone(), spec)
                .and_then(|post| stepping_stone_log_ml(&post, ladder, master.split(i as u64).seed()));
            match fit {
                Ok(ml) => SelectionEntry { p, q, log_ml: Some(ml.log_ml), std_error: Some(ml.std_error), error: None },
                Err(e) => SelectionEntry { p, q, log_ml: None, std_error: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    SelectionReport::rank(entries, prior_width_warning(priors).into_iter().collect())
}

//! Hamiltonian Monte Carlo with NUTS transitions and dual-averaging warm-up.

mod adapt;
mod diagnostics;
mod hamiltonian;
mod nuts;
pub mod targets;

use rayon::prelude::*;

pub use adapt::{find_initial_step_size, DualAveraging, MIN_STEP_SIZE};
pub use diagnostics::{effective_sample_size, ess_rhat, split_rhat, ParamDiagnostics};
pub use hamiltonian::{hamiltonian, leapfrog, leapfrog_checked, PhaseState, MAX_ENERGY_ERROR};
pub use nuts::{nuts_transition, Transition};

use crate::error::{BarmaError, Result};
use crate::simulate::RngStream;

/// A differentiable log density on ℝ^d.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Log density at `x`, writing the gradient into `grad`. Returns −∞
    /// outside the support.
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    fn log_density(&self, x: &[f64]) -> f64 {
        let mut grad = vec![0.0; x.len()];
        self.log_density_grad(x, &mut grad)
    }

    fn initial_point(&self, rng: &mut RngStream) -> Vec<f64> {
        (0..self.dim()).map(|_| rng.uniform_range(-0.5, 0.5)).collect()
    }

    /// Maps a sampler coordinate vector to the reported parameter scale.
    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

/// Chain-length and tuning settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub n_chains: usize,
    /// Iterations per chain, warm-up included.
    pub n_iterations: usize,
    pub warmup_fraction: f64,
    pub target_accept: f64,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { n_chains: 2, n_iterations: 2000, warmup_fraction: 0.5, target_accept: 0.8, max_depth: 10, seed: 1 }
    }
}

impl SamplerConfig {
    pub fn n_warmup(&self) -> usize {
        (self.n_iterations as f64 * self.warmup_fraction).round() as usize
    }

    pub fn n_draws(&self) -> usize {
        self.n_iterations - self.n_warmup().min(self.n_iterations)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(BarmaError::Domain("at least one chain is required".into()));
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return Err(BarmaError::Domain(format!(
                "warm-up fraction {} outside (0,1)",
                self.warmup_fraction
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(BarmaError::Domain(format!("target acceptance {} outside (0,1)", self.target_accept)));
        }
        if self.n_warmup() < 20 {
            return Err(BarmaError::Domain(format!("warm-up of {} iterations is below 20", self.n_warmup())));
        }
        if self.n_draws() < 1 {
            return Err(BarmaError::Domain("no iterations left after warm-up".into()));
        }
        Ok(())
    }
}

/// Post-warm-up output of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    pub chain: usize,
    /// Draws on the reported scale (ν back-transformed), one row per iteration.
    pub draws: Vec<Vec<f64>>,
    /// The same draws in sampler coordinates.
    pub unconstrained: Vec<Vec<f64>>,
    pub accept_stat: Vec<f64>,
    pub tree_depth: Vec<usize>,
    pub n_leapfrog: Vec<usize>,
    pub divergent: Vec<bool>,
    pub step_size: f64,
    /// Number of discarded warm-up iterations.
    pub n_warmup: usize,
}

impl ChainDraws {
    pub fn dim(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|row| row[j]).collect()
    }

    pub fn mean_accept(&self) -> f64 {
        self.accept_stat.iter().sum::<f64>() / self.accept_stat.len().max(1) as f64
    }

    pub fn n_divergent(&self) -> usize {
        self.divergent.iter().filter(|&&d| d).count()
    }

    /// Last position in sampler coordinates.
    pub fn final_position(&self) -> Option<&[f64]> {
        self.unconstrained.last().map(Vec::as_slice)
    }
}

/// Where a chain starts.
#[derive(Debug, Clone, Default)]
pub struct ChainStart {
    pub position: Option<Vec<f64>>,
    pub step_size: Option<f64>,
}

fn initial_state<T: LogDensity + ?Sized>(
    target: &T,
    start: &ChainStart,
    rng: &mut RngStream,
) -> Result<PhaseState> {
    let d = target.dim();
    if let Some(pos) = &start.position {
        if pos.len() != d {
            return Err(BarmaError::Dimension(format!("start has {} coordinates, target {d}", pos.len())));
        }
        let s = PhaseState::new(target, pos.clone(), vec![0.0; d]);
        if s.is_finite() {
            return Ok(s);
        }
    }
    for _ in 0..100 {
        let s = PhaseState::new(target, target.initial_point(rng), vec![0.0; d]);
        if s.is_finite() {
            return Ok(s);
        }
    }
    Err(BarmaError::Sampler("no finite starting point found in 100 attempts".into()))
}

/// Runs a single chain: warm-up with step-size adaptation, then sampling.
pub fn run_chain<T: LogDensity + ?Sized>(
    target: &T,
    config: &SamplerConfig,
    chain: usize,
    rng: &mut RngStream,
    start: &ChainStart,
) -> Result<ChainDraws> {
    config.validate()?;
    let mut state = initial_state(target, start, rng)?;
    let eps0 = match start.step_size {
        Some(eps) => eps,
        None => find_initial_step_size(target, &state, rng)?,
    };
    let mut adapter = DualAveraging::new(eps0, config.target_accept);
    let mut eps = eps0;
    let n_warmup = config.n_warmup();
    for _ in 0..n_warmup {
        let tr = nuts_transition(target, &state, eps, config.max_depth, rng);
        state = tr.state;
        eps = adapter.update(tr.accept_stat);
        if eps < MIN_STEP_SIZE || !eps.is_finite() {
            return Err(BarmaError::Sampler(format!("chain {chain}: step size adaptation failed ({eps:e})")));
        }
    }
    let eps = adapter.final_step_size();
    if eps < MIN_STEP_SIZE || !eps.is_finite() {
        return Err(BarmaError::Sampler(format!("chain {chain}: adapted step size {eps:e} is unusable")));
    }

    let n = config.n_draws();
    let mut out = ChainDraws {
        chain,
        draws: Vec::with_capacity(n),
        unconstrained: Vec::with_capacity(n),
        accept_stat: Vec::with_capacity(n),
        tree_depth: Vec::with_capacity(n),
        n_leapfrog: Vec::with_capacity(n),
        divergent: Vec::with_capacity(n),
        step_size: eps,
        n_warmup,
    };
    for _ in 0..n {
        let tr = nuts_transition(target, &state, eps, config.max_depth, rng);
        state = tr.state;
        let constrained = target.constrain(&state.position);
        if constrained.iter().any(|v| !v.is_finite()) {
            return Err(BarmaError::NonFinite(format!("chain {chain}: draw")));
        }
        out.draws.push(constrained);
        out.unconstrained.push(state.position.clone());
        out.accept_stat.push(tr.accept_stat);
        out.tree_depth.push(tr.depth);
        out.n_leapfrog.push(tr.n_leapfrog);
        out.divergent.push(tr.divergent);
    }
    if out.n_divergent() == n {
        return Err(BarmaError::Sampler(format!("chain {chain}: every transition diverged")));
    }
    Ok(out)
}

/// Chains that finished plus the errors of those that did not.
#[derive(Debug, Clone)]
pub struct ChainSet {
    pub chains: Vec<ChainDraws>,
    pub failures: Vec<(usize, BarmaError)>,
}

impl ChainSet {
    /// All draws pooled across chains.
    pub fn pooled(&self) -> Vec<Vec<f64>> {
        self.chains.iter().flat_map(|c| c.draws.iter().cloned()).collect()
    }
}

/// Runs `config.n_chains` independent chains in parallel.
///
/// Chain `i` draws from stream `i` split off the configured seed, so results
/// do not depend on scheduling or thread count.
pub fn run_chains<T: LogDensity + ?Sized>(target: &T, config: &SamplerConfig) -> Result<ChainSet> {
    run_chains_from(target, config, &vec![ChainStart::default(); config.n_chains])
}

/// As [`run_chains`], with per-chain starting positions and step sizes.
pub fn run_chains_from<T: LogDensity + ?Sized>(
    target: &T,
    config: &SamplerConfig,
    starts: &[ChainStart],
) -> Result<ChainSet> {
    config.validate()?;
    let master = RngStream::new(config.seed);
    let results: Vec<Result<ChainDraws>> = (0..config.n_chains)
        .into_par_iter()
        .map(|i| {
            let mut rng = master.split(i as u64);
            let start = starts.get(i).cloned().unwrap_or_default();
            run_chain(target, config, i, &mut rng, &start)
        })
        .collect();
    let mut chains = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(c) => chains.push(c),
            Err(e) => failures.push((i, e)),
        }
    }
    if chains.is_empty() {
        let detail: Vec<String> = failures.iter().map(|(i, e)| format!("chain {i}: {e}")).collect();
        return Err(BarmaError::Sampler(format!("all chains failed ({})", detail.join("; "))));
    }
    Ok(ChainSet { chains, failures })
}

#[cfg(test)]
mod tests {
    use super::targets::StandardNormal;
    use super::*;

    fn quick(seed: u64) -> SamplerConfig {
        SamplerConfig { n_chains: 2, n_iterations: 400, seed, ..SamplerConfig::default() }
    }

    #[test]
    fn config_validation() {
        assert!(SamplerConfig::default().validate().is_ok());
        assert!(SamplerConfig { warmup_fraction: 1.0, ..SamplerConfig::default() }.validate().is_err());
        assert!(SamplerConfig { n_iterations: 30, ..SamplerConfig::default() }.validate().is_err());
        assert!(SamplerConfig { n_chains: 0, ..SamplerConfig::default() }.validate().is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let target = StandardNormal::new(3);
        let a = run_chains(&target, &quick(9)).unwrap();
        let b = run_chains(&target, &quick(9)).unwrap();
        assert_eq!(a.chains, b.chains);
        let c = run_chains(&target, &quick(10)).unwrap();
        assert_ne!(a.chains[0].draws, c.chains[0].draws);
    }

    #[test]
    fn chain_results_do_not_depend_on_chain_count() {
        let target = StandardNormal::new(2);
        let two = run_chains(&target, &quick(4)).unwrap();
        let three = run_chains(&target, &SamplerConfig { n_chains: 3, ..quick(4) }).unwrap();
        assert_eq!(two.chains[0], three.chains[0]);
        assert_eq!(two.chains[1], three.chains[1]);
    }

    #[test]
    fn adapted_acceptance_near_target() {
        let target = StandardNormal::new(1);
        let cfg = SamplerConfig { n_chains: 1, n_iterations: 4000, seed: 3, ..SamplerConfig::default() };
        let set = run_chains(&target, &cfg).unwrap();
        let acc = set.chains[0].mean_accept();
        assert!((acc - 0.8).abs() < 0.1, "{acc}");
    }

    #[test]
    fn higher_target_means_smaller_step() {
        let target = StandardNormal::new(5);
        let lo = run_chains(&target, &SamplerConfig { target_accept: 0.6, ..quick(5) }).unwrap();
        let hi = run_chains(&target, &SamplerConfig { target_accept: 0.99, ..quick(5) }).unwrap();
        assert!(hi.chains[0].step_size < lo.chains[0].step_size);
        let again = run_chains(&target, &SamplerConfig { target_accept: 0.99, ..quick(5) }).unwrap();
        assert_eq!(hi.chains[0].step_size, again.chains[0].step_size);
    }

    struct Nowhere;
    impl LogDensity for Nowhere {
        fn dim(&self) -> usize {
            1
        }
        fn log_density_grad(&self, _x: &[f64], grad: &mut [f64]) -> f64 {
            grad[0] = 0.0;
            f64::NEG_INFINITY
        }
    }

    #[test]
    fn all_chains_failing_is_an_error() {
        assert!(matches!(run_chains(&Nowhere, &quick(1)), Err(BarmaError::Sampler(_))));
    }
}

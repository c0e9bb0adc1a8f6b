//! Split-chain effective sample size and potential scale reduction.

use super::ChainDraws;

/// ESS and R̂ for one parameter; `None` when undefined (constant draws).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamDiagnostics {
    pub ess: Option<f64>,
    pub rhat: Option<f64>,
}

/// Halves every chain (dropping the middle draw of odd lengths) and trims to
/// a common length.
fn split_chains(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let half = n / 2;
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let c = &c[..n];
        out.push(c[..half].to_vec());
        out.push(c[n - half..].to_vec());
    }
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

struct Pooled {
    chains: Vec<Vec<f64>>,
    means: Vec<f64>,
    /// Mean of within-chain unbiased variances.
    within: f64,
    /// var⁺ = (N−1)/N·W + B/N.
    var_plus: f64,
}

fn pool(chains: &[&[f64]]) -> Option<Pooled> {
    let chains = split_chains(chains);
    let m = chains.len();
    let n = chains.first().map_or(0, Vec::len);
    if m == 0 || n < 2 {
        return None;
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n as f64 - 1.0))
        .collect();
    let within = mean(&vars);
    let grand = mean(&means);
    let between_over_n = if m > 1 {
        means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0)
    } else {
        0.0
    };
    let var_plus = (n as f64 - 1.0) / n as f64 * within + between_over_n;
    if !(within > 0.0) || !within.is_finite() {
        return None;
    }
    Some(Pooled { chains, means, within, var_plus })
}

/// Split-chain R̂ = sqrt(var⁺ / W).
pub fn split_rhat(chains: &[&[f64]]) -> Option<f64> {
    pool(chains).map(|p| (p.var_plus / p.within).sqrt())
}

/// Effective sample size with Geyer's initial monotone sequence, computed on
/// split chains.
pub fn effective_sample_size(chains: &[&[f64]]) -> Option<f64> {
    let p = pool(chains)?;
    let m = p.chains.len();
    let n = p.chains[0].len();
    if n < 4 {
        return None;
    }
    // Biased autocovariance averaged over chains.
    let mean_acov = |lag: usize| -> f64 {
        let mut total = 0.0;
        for (c, mu) in p.chains.iter().zip(&p.means) {
            let mut s = 0.0;
            for t in 0..n - lag {
                s += (c[t] - mu) * (c[t + lag] - mu);
            }
            total += s / n as f64;
        }
        total / m as f64
    };
    let within_biased = p.within * (n as f64 - 1.0) / n as f64;
    let rho = |lag: usize| 1.0 - (within_biased - mean_acov(lag)) / p.var_plus;

    let mut tau_sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = if lag == 0 { 1.0 + rho(1) } else { rho(lag) + rho(lag + 1) };
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau_sum += pair;
        prev_pair = pair;
        lag += 2;
    }
    let tau = (-1.0 + 2.0 * tau_sum).max(1.0 / (n as f64 * m as f64).log10());
    let total = (n * m) as f64;
    Some((total / tau).min(total * total.log10()))
}

/// Per-parameter ESS and R̂ over a set of chains.
pub fn ess_rhat(chains: &[ChainDraws]) -> Vec<ParamDiagnostics> {
    let Some(first) = chains.first() else {
        return Vec::new();
    };
    let d = first.dim();
    (0..d)
        .map(|j| {
            let cols: Vec<Vec<f64>> = chains.iter().map(|c| c.column(j)).collect();
            let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
            ParamDiagnostics { ess: effective_sample_size(&refs), rhat: split_rhat(&refs) }
        })
        .collect()
}

//! No-U-Turn transition with multinomial trajectory sampling.

use super::hamiltonian::{leapfrog, PhaseState, MAX_ENERGY_ERROR};
use super::LogDensity;
use crate::simulate::RngStream;

/// Outcome of one NUTS transition.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: PhaseState,
    /// Mean Metropolis acceptance over all trajectory points.
    pub accept_stat: f64,
    pub depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
}

struct Tree {
    minus: PhaseState,
    plus: PhaseState,
    proposal: PhaseState,
    log_weight: f64,
    sum_accept: f64,
    n_leapfrog: usize,
    turning: bool,
    divergent: bool,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// (γ⁺ − γ⁻)·κ < 0 at either end.
fn is_turning(minus: &PhaseState, plus: &PhaseState) -> bool {
    let mut dot_plus = 0.0;
    let mut dot_minus = 0.0;
    for i in 0..minus.position.len() {
        let span = plus.position[i] - minus.position[i];
        dot_plus += span * plus.momentum[i];
        dot_minus += span * minus.momentum[i];
    }
    dot_plus < 0.0 || dot_minus < 0.0
}

#[allow(clippy::too_many_arguments)]
fn build_tree<T: LogDensity + ?Sized>(
    target: &T,
    edge: &PhaseState,
    direction: f64,
    depth: usize,
    eps: f64,
    h0: f64,
    rng: &mut RngStream,
) -> Tree {
    if depth == 0 {
        let next = leapfrog(target, edge, direction * eps);
        let dh = next.energy() - h0;
        let divergent = !dh.is_finite() || dh.abs() > MAX_ENERGY_ERROR;
        let log_weight = if dh.is_finite() { -dh } else { f64::NEG_INFINITY };
        let accept = if dh.is_finite() { (-dh).exp().min(1.0) } else { 0.0 };
        return Tree {
            minus: next.clone(),
            plus: next.clone(),
            proposal: next,
            log_weight,
            sum_accept: accept,
            n_leapfrog: 1,
            turning: false,
            divergent,
        };
    }
    let mut inner = build_tree(target, edge, direction, depth - 1, eps, h0, rng);
    if inner.divergent || inner.turning {
        return inner;
    }
    let outer_edge = if direction > 0.0 { &inner.plus } else { &inner.minus };
    let outer = build_tree(target, outer_edge, direction, depth - 1, eps, h0, rng);
    inner.n_leapfrog += outer.n_leapfrog;
    inner.sum_accept += outer.sum_accept;
    if outer.divergent || outer.turning {
        inner.divergent = outer.divergent;
        inner.turning = outer.turning;
        return inner;
    }
    let log_weight = log_add_exp(inner.log_weight, outer.log_weight);
    // Uniform (multinomial) choice within the subtree.
    if rng.uniform().ln() < outer.log_weight - log_weight {
        inner.proposal = outer.proposal;
    }
    inner.log_weight = log_weight;
    if direction > 0.0 {
        inner.plus = outer.plus;
    } else {
        inner.minus = outer.minus;
    }
    inner.turning = is_turning(&inner.minus, &inner.plus);
    inner
}

/// One NUTS transition from `state` (whose cached density must be current).
///
/// The trajectory is doubled until a U-turn, a divergence or `max_depth`
/// doublings; `max_depth = 0` still performs one doubling, which is a single
/// leapfrog step with a Metropolis correction.
pub fn nuts_transition<T: LogDensity + ?Sized>(
    target: &T,
    state: &PhaseState,
    eps: f64,
    max_depth: usize,
    rng: &mut RngStream,
) -> Transition {
    let momentum: Vec<f64> = (0..state.position.len()).map(|_| rng.normal()).collect();
    let init = PhaseState { momentum, ..state.clone() };
    let h0 = init.energy();
    let mut minus = init.clone();
    let mut plus = init.clone();
    let mut proposal = init;
    let mut log_weight = 0.0;
    let mut sum_accept = 0.0;
    let mut n_leapfrog = 0;
    let mut divergent = false;
    let mut depth = 0;

    for j in 0..max_depth.max(1) {
        let direction = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
        let edge = if direction > 0.0 { &plus } else { &minus };
        let sub = build_tree(target, edge, direction, j, eps, h0, rng);
        n_leapfrog += sub.n_leapfrog;
        sum_accept += sub.sum_accept;
        depth = j + 1;
        if sub.divergent {
            divergent = true;
            break;
        }
        if sub.turning {
            break;
        }
        // Biased progressive sampling favours the new subtree.
        if rng.uniform().ln() < sub.log_weight - log_weight {
            proposal = sub.proposal;
        }
        log_weight = log_add_exp(log_weight, sub.log_weight);
        if direction > 0.0 {
            plus = sub.plus;
        } else {
            minus = sub.minus;
        }
        if is_turning(&minus, &plus) {
            break;
        }
    }
    Transition {
        state: proposal,
        accept_stat: if n_leapfrog > 0 { sum_accept / n_leapfrog as f64 } else { 0.0 },
        depth,
        n_leapfrog,
        divergent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::targets::{CorrelatedNormal, StandardNormal};

    fn run<T: LogDensity>(target: &T, eps: f64, n: usize, max_depth: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = RngStream::new(seed);
        let mut state = PhaseState::new(target, vec![0.1; target.dim()], vec![0.0; target.dim()]);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let tr = nuts_transition(target, &state, eps, max_depth, &mut rng);
            state = tr.state;
            out.push(state.position.clone());
        }
        out
    }

    #[test]
    fn standard_normal_moments() {
        let target = StandardNormal::new(1);
        let xs: Vec<f64> = run(&target, 0.9, 20_000, 10, 1).into_iter().map(|v| v[0]).collect();
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(m.abs() < 0.03, "mean {m}");
        assert!((v - 1.0).abs() < 0.05, "var {v}");
    }

    #[test]
    fn correlated_normal() {
        let target = CorrelatedNormal::new(0.8);
        let xs = run(&target, 0.5, 20_000, 10, 2);
        let n = xs.len() as f64;
        let ma = xs.iter().map(|v| v[0]).sum::<f64>() / n;
        let mb = xs.iter().map(|v| v[1]).sum::<f64>() / n;
        let cov = xs.iter().map(|v| (v[0] - ma) * (v[1] - mb)).sum::<f64>() / n;
        let va = xs.iter().map(|v| (v[0] - ma).powi(2)).sum::<f64>() / n;
        let vb = xs.iter().map(|v| (v[1] - mb).powi(2)).sum::<f64>() / n;
        let rho = cov / (va * vb).sqrt();
        assert!((rho - 0.8).abs() < 0.03, "rho {rho}");
    }

    #[test]
    fn depth_zero_is_single_metropolis_step() {
        let target = StandardNormal::new(2);
        let mut rng = RngStream::new(3);
        let state = PhaseState::new(&target, vec![0.5, -0.5], vec![0.0; 2]);
        for _ in 0..200 {
            let tr = nuts_transition(&target, &state, 0.7, 0, &mut rng);
            assert_eq!(tr.n_leapfrog, 1);
            assert_eq!(tr.depth, 1);
            let moved = tr.state.position != state.position;
            if moved {
                // The only candidate is one leapfrog step away.
                let d: f64 = tr.state.position.iter().zip(&state.position).map(|(a, b)| (a - b).powi(2)).sum();
                assert!(d > 0.0);
            }
        }
    }

    #[test]
    fn depth_zero_acceptance_matches_metropolis_rule() {
        let target = StandardNormal::new(1);
        let state = PhaseState::new(&target, vec![1.5], vec![0.0]);
        let mut rng = RngStream::new(4);
        let mut accepted = 0usize;
        let mut expected = 0.0;
        let trials = 40_000;
        for _ in 0..trials {
            let mut probe = rng.clone();
            let k = probe.normal();
            let dir = if probe.bernoulli(0.5) { 1.0 } else { -1.0 };
            let next = leapfrog(&target, &PhaseState { momentum: vec![k], ..state.clone() }, dir * 1.2);
            let h0 = -state.log_density + 0.5 * k * k;
            expected += (h0 - next.energy()).exp().min(1.0);
            let tr = nuts_transition(&target, &state, 1.2, 0, &mut rng);
            if tr.state.position != state.position {
                accepted += 1;
            }
        }
        let rate = accepted as f64 / trials as f64;
        let expected = expected / trials as f64;
        assert!((rate - expected).abs() < 0.01, "{rate} vs {expected}");
    }

    #[test]
    fn huge_step_is_divergent() {
        let target = StandardNormal::new(1);
        let mut rng = RngStream::new(5);
        let state = PhaseState::new(&target, vec![0.0], vec![0.0]);
        let tr = nuts_transition(&target, &state, 1e3, 10, &mut rng);
        assert!(tr.divergent);
        assert_eq!(tr.state.position, state.position);
    }
}

//! Step-size tuning: initial heuristic and dual averaging.

use super::hamiltonian::{leapfrog, PhaseState};
use super::LogDensity;
use crate::error::{BarmaError, Result};
use crate::simulate::RngStream;

/// Smallest step size accepted before adaptation is declared failed.
pub const MIN_STEP_SIZE: f64 = 1e-10;

/// Dual-averaging schedule of Hoffman and Gelman.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    mu: f64,
    target: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
    count: usize,
}

impl DualAveraging {
    pub fn new(initial_step: f64, target_accept: f64) -> Self {
        Self {
            mu: (10.0 * initial_step).ln(),
            target: target_accept,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            h_bar: 0.0,
            log_eps: initial_step.ln(),
            log_eps_bar: 0.0,
            count: 0,
        }
    }

    /// Feeds one acceptance statistic and returns the next step size.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        self.count += 1;
        let m = self.count as f64;
        let w = 1.0 / (m + self.t0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_stat);
        self.log_eps = self.mu - m.sqrt() / self.gamma * self.h_bar;
        let decay = m.powf(-self.kappa);
        self.log_eps_bar = decay * self.log_eps + (1.0 - decay) * self.log_eps_bar;
        self.log_eps.exp()
    }

    pub fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    /// Averaged step size to freeze after warm-up.
    pub fn final_step_size(&self) -> f64 {
        if self.count == 0 {
            self.log_eps.exp()
        } else {
            self.log_eps_bar.exp()
        }
    }
}

/// Doubles or halves ε from 1 until a single leapfrog step crosses an
/// acceptance probability of one half.
pub fn find_initial_step_size<T: LogDensity + ?Sized>(
    target: &T,
    state: &PhaseState,
    rng: &mut RngStream,
) -> Result<f64> {
    let momentum: Vec<f64> = (0..state.position.len()).map(|_| rng.normal()).collect();
    let start = PhaseState { momentum, ..state.clone() };
    let h0 = start.energy();
    let log_ratio = |eps: f64| {
        let next = leapfrog(target, &start, eps);
        let dh = h0 - next.energy();
        if dh.is_nan() {
            f64::NEG_INFINITY
        } else {
            dh
        }
    };
    let mut eps = 1.0;
    let ln_half = 0.5f64.ln();
    let direction = if log_ratio(eps) > ln_half { 1.0 } else { -1.0 };
    for _ in 0..100 {
        let lr = log_ratio(eps);
        if direction * lr <= direction * ln_half {
            break;
        }
        eps *= 2f64.powf(direction);
        if eps < MIN_STEP_SIZE {
            return Err(BarmaError::Sampler(format!("step size underflow ({eps:e})")));
        }
        if eps > 1e7 {
            break;
        }
    }
    Ok(eps)
}

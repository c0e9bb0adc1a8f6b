use super::LogDensity;

/// Position, momentum and the cached log density/gradient at the position.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub log_density: f64,
    pub grad: Vec<f64>,
}

impl PhaseState {
    pub fn new<T: LogDensity + ?Sized>(target: &T, position: Vec<f64>, momentum: Vec<f64>) -> Self {
        let mut grad = vec![0.0; position.len()];
        let log_density = target.log_density_grad(&position, &mut grad);
        Self { position, momentum, log_density, grad }
    }

    pub fn kinetic(&self) -> f64 {
        0.5 * self.momentum.iter().map(|k| k * k).sum::<f64>()
    }

    /// See [`hamiltonian`].
    pub fn energy(&self) -> f64 {
        hamiltonian(self)
    }

    pub fn is_finite(&self) -> bool {
        self.log_density.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }
}

/// H = −log π(γ) + ½κ′κ; +∞ when the log density is −∞.
pub fn hamiltonian(state: &PhaseState) -> f64 {
    if !state.log_density.is_finite() {
        return f64::INFINITY;
    }
    -state.log_density + state.kinetic()
}

/// One leapfrog step of size `eps` (negative integrates backwards in time).
pub fn leapfrog<T: LogDensity + ?Sized>(target: &T, state: &PhaseState, eps: f64) -> PhaseState {
    let half = 0.5 * eps;
    let mut momentum: Vec<f64> = state.momentum.iter().zip(&state.grad).map(|(k, g)| k + half * g).collect();
    let position: Vec<f64> = state.position.iter().zip(&momentum).map(|(x, k)| x + eps * k).collect();
    let mut grad = vec![0.0; position.len()];
    let log_density = target.log_density_grad(&position, &mut grad);
    if log_density.is_finite() {
        for (k, g) in momentum.iter_mut().zip(&grad) {
            *k += half * g;
        }
    }
    PhaseState { position, momentum, log_density, grad }
}

/// Divergence threshold on the energy error.
pub const MAX_ENERGY_ERROR: f64 = 1000.0;

/// Leapfrog step reporting whether |ΔH| exceeded [`MAX_ENERGY_ERROR`].
pub fn leapfrog_checked<T: LogDensity + ?Sized>(target: &T, state: &PhaseState, eps: f64) -> (PhaseState, bool) {
    let h0 = state.energy();
    let next = leapfrog(target, state, eps);
    let dh = next.energy() - h0;
    let divergent = !dh.is_finite() || dh.abs() > MAX_ENERGY_ERROR;
    (next, divergent)
}

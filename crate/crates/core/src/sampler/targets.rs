//! Gaussian test densities with known moments.

use super::LogDensity;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Independent standard normal in `dim` dimensions.
#[derive(Debug, Clone, Copy)]
pub struct StandardNormal {
    dim: usize,
}

impl StandardNormal {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl LogDensity for StandardNormal {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        for (g, v) in grad.iter_mut().zip(x) {
            *g = -v;
        }
        -0.5 * x.iter().map(|v| v * v).sum::<f64>() - 0.5 * self.dim as f64 * LN_2PI
    }
}

/// Bivariate normal with unit variances and correlation `rho`.
#[derive(Debug, Clone, Copy)]
pub struct CorrelatedNormal {
    rho: f64,
}

impl CorrelatedNormal {
    pub fn new(rho: f64) -> Self {
        assert!(rho.abs() < 1.0);
        Self { rho }
    }
}

impl LogDensity for CorrelatedNormal {
    fn dim(&self) -> usize {
        2
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let det = 1.0 - self.rho * self.rho;
        let (a, b) = (x[0], x[1]);
        grad[0] = -(a - self.rho * b) / det;
        grad[1] = -(b - self.rho * a) / det;
        -0.5 * (a * a - 2.0 * self.rho * a * b + b * b) / det - LN_2PI - 0.5 * det.ln()
    }
}

//! Gamma and beta variates.

use super::RngStream;
use crate::model::MU_EPS;

/// Log of a Gamma(shape, 1) variate by Marsaglia–Tsang.
///
/// Shapes below one use the boost G(a) = G(a+1)·U^{1/a}, carried out on the
/// log scale so tiny shapes do not underflow.
pub fn draw_log_gamma(shape: f64, rng: &mut RngStream) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let boost = rng.open01().ln() / shape;
        return draw_log_gamma(shape + 1.0, rng) + boost;
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = rng.normal();
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = rng.open01();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d.ln() + v.ln();
        }
    }
}

/// Gamma(shape, 1) variate.
pub fn draw_gamma(shape: f64, rng: &mut RngStream) -> f64 {
    draw_log_gamma(shape, rng).exp()
}

/// Beta variate with mean `mu` and precision `nu`, i.e. Beta(νμ, ν(1−μ)),
/// clamped into [1e-12, 1 − 1e-12].
pub fn draw_beta(mu: f64, nu: f64, rng: &mut RngStream) -> f64 {
    let lx = draw_log_gamma(nu * mu, rng);
    let ly = draw_log_gamma(nu * (1.0 - mu), rng);
    // X/(X+Y) = 1/(1+exp(ly-lx))
    let y = 1.0 / (1.0 + (ly - lx).exp());
    y.clamp(MU_EPS, 1.0 - MU_EPS)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn gamma_moments() {
        let mut rng = RngStream::new(2024);
        for &a in &[0.5, 2.0, 5.0, 100.0] {
            let xs: Vec<f64> = (0..100_000).map(|_| draw_gamma(a, &mut rng)).collect();
            let (m, v) = moments(&xs);
            assert!((m - a).abs() < 3.0 * (a / 1e5).sqrt(), "shape {a}: mean {m}");
            assert!((v - a).abs() < 0.1 * a, "shape {a}: var {v}");
        }
    }

    #[test]
    fn beta_moments() {
        let mut rng = RngStream::new(99);
        let xs: Vec<f64> = (0..100_000).map(|_| draw_beta(0.3, 20.0, &mut rng)).collect();
        let (m, v) = moments(&xs);
        assert!((m - 0.3).abs() < 0.005);
        let target = 0.3 * 0.7 / 21.0;
        assert!((v - target).abs() < 0.15 * target);
    }

    #[test]
    fn beta_one_one_is_uniform() {
        let mut rng = RngStream::new(5);
        let mut xs: Vec<f64> = (0..10_000).map(|_| draw_beta(0.5, 2.0, &mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| ((i as f64 + 1.0) / n - x).abs().max((x - i as f64 / n).abs()))
            .fold(0.0, f64::max);
        // Asymptotic KS critical value at p = 0.001 is 1.95/sqrt(n).
        assert!(d < 1.95 / n.sqrt(), "KS statistic {d}");
    }

    #[test]
    fn beta_is_reproducible_and_interior() {
        let a = draw_beta(0.4, 3.0, &mut RngStream::new(8));
        let b = draw_beta(0.4, 3.0, &mut RngStream::new(8));
        assert_eq!(a, b);
        let mut rng = RngStream::new(3);
        for _ in 0..10_000 {
            let y = draw_beta(0.01, 0.5, &mut rng);
            assert!(y > 0.0 && y < 1.0);
        }
    }
}

//! Posterior summaries, characteristic-polynomial roots and quasi-unit-root
//! probabilities.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{BarmaError, Result};
use crate::model::ModelOrder;
use crate::sampler::{ess_rhat, ChainDraws};

/// Quantile of sorted data with linear interpolation between order
/// statistics (`h = (n−1)p`).
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sorts a copy of `values` (NaN-free) and returns the requested quantile.
pub fn quantile(values: &[f64], prob: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, prob)
}

/// Equal-tailed interval at level `level` from unsorted values.
pub fn equal_tailed_interval(values: &[f64], level: f64) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (quantile_sorted(&v, tail), quantile_sorted(&v, 1.0 - tail))
}

/// Summary of one parameter's marginal posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub ess: Option<f64>,
    pub rhat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub level: f64,
    pub n_draws: usize,
    pub params: Vec<ParamSummary>,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn means(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.mean).collect()
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(BarmaError::Domain(format!("credible level {level} outside (0,1)")));
    }
    Ok(())
}

/// Summarizes pooled post-warm-up draws. `names` labels the columns; missing
/// names default to `x{j}`.
pub fn summarize_draws(chains: &[ChainDraws], names: &[String], level: f64) -> Result<PosteriorSummary> {
    check_level(level)?;
    let n_draws: usize = chains.iter().map(ChainDraws::len).sum();
    if n_draws < 10 {
        return Err(BarmaError::Insufficient(format!("{n_draws} draws; at least 10 are needed")));
    }
    let d = chains[0].dim();
    if chains.iter().any(|c| c.dim() != d) {
        return Err(BarmaError::Dimension("chains disagree on parameter dimension".into()));
    }
    let diag = ess_rhat(chains);
    let tail = (1.0 - level) / 2.0;
    let params = (0..d)
        .map(|j| {
            let mut col: Vec<f64> = chains.iter().flat_map(|c| c.draws.iter().map(move |row| row[j])).collect();
            let n = col.len() as f64;
            // Shifting by the first draw keeps constant columns exact.
            let anchor = col[0];
            let mean = anchor + col.iter().map(|v| v - anchor).sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            col.sort_by(f64::total_cmp);
            ParamSummary {
                name: names.get(j).cloned().unwrap_or_else(|| format!("x{j}")),
                mean,
                median: quantile_sorted(&col, 0.5),
                sd: var.sqrt(),
                lower: quantile_sorted(&col, tail),
                upper: quantile_sorted(&col, 1.0 - tail),
                ess: diag[j].ess,
                rhat: diag[j].rhat,
            }
        })
        .collect();
    Ok(PosteriorSummary { level, n_draws, params })
}

const ABERTH_MAX_ITER: usize = 200;
const ABERTH_TOL: f64 = 1e-10;
/// AR/MA coefficients below this magnitude at the tail of the polynomial are
/// treated as absent.
pub const TRAILING_ZERO_TOL: f64 = 1e-12;

fn horner(coefs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    // Returns (p(z), p'(z)); coefficients in ascending powers.
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coefs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// All complex roots of Σ cₖ zᵏ (ascending coefficients, nonzero leading term)
/// by simultaneous Aberth–Ehrlich iteration.
pub fn polynomial_roots(coefs: &[f64]) -> Result<Vec<Complex64>> {
    let deg = coefs.len().saturating_sub(1);
    if deg == 0 {
        return Ok(Vec::new());
    }
    let lead = coefs[deg];
    if lead == 0.0 || coefs.iter().any(|c| !c.is_finite()) {
        return Err(BarmaError::Domain("polynomial needs finite coefficients and a nonzero leading term".into()));
    }
    if coefs[0] == 0.0 {
        return Err(BarmaError::Domain("constant term must be nonzero".into()));
    }
    let radius = (coefs[0] / lead).abs().powf(1.0 / deg as f64);
    // Off-axis starting angles keep the initial set asymmetric so real roots
    // can be reached from either half-plane.
    let mut z: Vec<Complex64> = (0..deg)
        .map(|k| Complex64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / deg as f64 + 0.4))
        .collect();
    for _ in 0..ABERTH_MAX_ITER {
        let mut max_step: f64 = 0.0;
        for k in 0..deg {
            let (p, dp) = horner(coefs, z[k]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..deg).filter(|&j| j != k).map(|j| (z[k] - z[j]).inv()).sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if !step.re.is_finite() || !step.im.is_finite() {
                continue;
            }
            z[k] -= step;
            max_step = max_step.max(step.norm() / (1.0 + z[k].norm()));
        }
        if max_step < ABERTH_TOL {
            return Ok(z);
        }
    }
    Err(BarmaError::NoConvergence { what: "Aberth root iteration".into(), iterations: ABERTH_MAX_ITER })
}

fn strip_trailing(coefs: &[f64]) -> &[f64] {
    let mut end = coefs.len();
    while end > 0 && coefs[end - 1].abs() < TRAILING_ZERO_TOL {
        end -= 1;
    }
    &coefs[..end]
}

/// Roots of φ(z) = 1 − φ₁z − … − φ_pz^p after dropping negligible trailing
/// coefficients.
pub fn ar_roots(phi: &[f64]) -> Result<Vec<Complex64>> {
    let phi = strip_trailing(phi);
    match phi.len() {
        0 => Ok(Vec::new()),
        1 => Ok(vec![Complex64::new(1.0 / phi[0], 0.0)]),
        2 => Ok(quadratic_roots(phi[0], phi[1]).to_vec()),
        _ => {
            let coefs: Vec<f64> = std::iter::once(1.0).chain(phi.iter().map(|c| -c)).collect();
            polynomial_roots(&coefs)
        }
    }
}

/// Roots of θ(z) = 1 + θ₁z + … + θ_qz^q.
pub fn ma_roots(theta: &[f64]) -> Result<Vec<Complex64>> {
    let neg: Vec<f64> = theta.iter().map(|t| -t).collect();
    ar_roots(&neg)
}

/// Roots of 1 − φ₁z − φ₂z² with φ₂ ≠ 0.
fn quadratic_roots(phi1: f64, phi2: f64) -> [Complex64; 2] {
    // φ₂z² + φ₁z − 1 = 0.
    let disc = phi1 * phi1 + 4.0 * phi2;
    if disc >= 0.0 {
        let s = disc.sqrt();
        // Cancellation-free pairing: roots q/φ₂ and −1/q.
        let sign = if phi1 >= 0.0 { 1.0 } else { -1.0 };
        let q = -0.5 * (phi1 + sign * s);
        [Complex64::new(q / phi2, 0.0), Complex64::new(-1.0 / q, 0.0)]
    } else {
        let re = -phi1 / (2.0 * phi2);
        let im = (-disc).sqrt() / (2.0 * phi2.abs());
        [Complex64::new(re, im), Complex64::new(re, -im)]
    }
}

fn min_modulus(roots: &[Complex64]) -> f64 {
    roots.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min)
}

/// Smallest root modulus of the AR polynomial; +∞ when there is no AR part.
pub fn ar_min_root_modulus(phi: &[f64]) -> Result<f64> {
    Ok(min_modulus(&ar_roots(phi)?))
}

/// Smallest root modulus of the MA polynomial; +∞ when there is no MA part.
pub fn ma_min_root_modulus(theta: &[f64]) -> Result<f64> {
    Ok(min_modulus(&ma_roots(theta)?))
}

/// Threshold grid used when none is given; 1.05 is the customary cut-off.
pub const DEFAULT_THRESHOLDS: [f64; 5] = [1.01, 1.02, 1.03, 1.04, 1.05];

/// Per-draw minimum AR root moduli and threshold exceedance probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct RootReport {
    pub moduli: Vec<f64>,
    pub ma_moduli: Vec<f64>,
    pub thresholds: Vec<f64>,
    /// P(min modulus < c) for each threshold c.
    pub probabilities: Vec<f64>,
}

/// Posterior probability that the smallest AR root modulus falls below each
/// threshold. `phi_draws` holds one AR coefficient vector per draw;
/// `theta_draws` (possibly empty) only feeds the reported MA moduli.
pub fn unit_root_probability(phi_draws: &[Vec<f64>], theta_draws: &[Vec<f64>], thresholds: &[f64]) -> Result<RootReport> {
    if phi_draws.is_empty() {
        return Err(BarmaError::Insufficient("no draws".into()));
    }
    if thresholds.is_empty() || thresholds.iter().any(|&c| !(c >= 1.0) || !c.is_finite()) {
        return Err(BarmaError::Domain("thresholds must be finite and at least 1".into()));
    }
    if thresholds.windows(2).any(|w| w[1] < w[0]) {
        return Err(BarmaError::Domain("thresholds must be sorted".into()));
    }
    let moduli: Vec<f64> = phi_draws.par_iter().map(|phi| ar_min_root_modulus(phi)).collect::<Result<_>>()?;
    let ma_moduli: Vec<f64> = theta_draws.par_iter().map(|t| ma_min_root_modulus(t)).collect::<Result<_>>()?;
    let n = moduli.len() as f64;
    let probabilities = thresholds
        .iter()
        .map(|&c| moduli.iter().filter(|&&m| m < c).count() as f64 / n)
        .collect();
    Ok(RootReport { moduli, ma_moduli, thresholds: thresholds.to_vec(), probabilities })
}

/// Extracts φ and θ from constrained draws laid out as (ν, α, β, φ, θ) and
/// computes the root report.
pub fn root_report_from_chains(chains: &[ChainDraws], order: &ModelOrder, thresholds: &[f64]) -> Result<RootReport> {
    let phi_start = 2 + order.r;
    let theta_start = phi_start + order.p;
    let rows = chains.iter().flat_map(|c| c.draws.iter());
    let (phi, theta): (Vec<Vec<f64>>, Vec<Vec<f64>>) = rows
        .map(|row| (row[phi_start..theta_start].to_vec(), row[theta_start..theta_start + order.q].to_vec()))
        .unzip();
    unit_root_probability(&phi, &theta, thresholds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::RngStream;
    use proptest::prelude::*;

    fn chain(rows: Vec<Vec<f64>>) -> ChainDraws {
        let n = rows.len();
        ChainDraws {
            chain: 0,
            unconstrained: rows.clone(),
            draws: rows,
            accept_stat: vec![0.8; n],
            tree_depth: vec![1; n],
            n_leapfrog: vec![1; n],
            divergent: vec![false; n],
            step_size: 0.1,
            n_warmup: 0,
        }
    }

    #[test]
    fn constant_draws_summary() {
        let s = summarize_draws(&[chain(vec![vec![0.7]; 20])], &[], 0.95).unwrap();
        let p = &s.params[0];
        assert_eq!((p.mean, p.median, p.lower, p.upper), (0.7, 0.7, 0.7, 0.7));
        assert_eq!(p.name, "x0");
    }

    #[test]
    fn interval_of_one_to_hundred() {
        let rows = (1..=100).map(|i| vec![i as f64]).collect();
        let s = summarize_draws(&[chain(rows)], &["a".to_string()], 0.9).unwrap();
        let p = s.get("a").unwrap();
        assert!((p.lower - 5.95).abs() < 1e-12 && (p.upper - 95.05).abs() < 1e-12);
        assert!((p.median - 50.5).abs() < 1e-12);
    }

    #[test]
    fn pooling_equals_concatenation() {
        let mut rng = RngStream::new(2);
        let a: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.normal(), rng.normal()]).collect();
        let b: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.normal(), rng.normal()]).collect();
        let split = summarize_draws(&[chain(a.clone()), chain(b.clone())], &[], 0.95).unwrap();
        let joined = summarize_draws(&[chain([a, b].concat())], &[], 0.95).unwrap();
        for (x, y) in split.params.iter().zip(&joined.params) {
            assert!((x.mean - y.mean).abs() < 1e-14);
            assert_eq!((x.median, x.lower, x.upper), (y.median, y.lower, y.upper));
            assert!((x.sd - y.sd).abs() < 1e-14);
        }
    }

    #[test]
    fn too_few_draws() {
        assert!(matches!(summarize_draws(&[chain(vec![vec![1.0]; 9])], &[], 0.95), Err(BarmaError::Insufficient(_))));
        assert!(summarize_draws(&[chain(vec![vec![1.0]; 20])], &[], 1.0).is_err());
    }

    #[test]
    fn modulus_examples() {
        assert!((ar_min_root_modulus(&[0.3, 0.1]).unwrap() - 2.0).abs() < 1e-12);
        assert!((ar_min_root_modulus(&[0.6, -0.1]).unwrap() - 10f64.sqrt()).abs() < 1e-12);
        assert!((ar_min_root_modulus(&[0.5]).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(ar_min_root_modulus(&[]).unwrap(), f64::INFINITY);
        assert_eq!(ar_min_root_modulus(&[0.5, 1e-13]).unwrap(), 2.0);
        assert!((ma_min_root_modulus(&[0.4]).unwrap() - 2.5).abs() < 1e-15);
    }

    fn eval_ar(phi: &[f64], z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(1.0, 0.0);
        let mut pow = Complex64::new(1.0, 0.0);
        for &c in phi {
            pow *= z;
            acc -= pow * c;
        }
        acc
    }

    #[test]
    fn cubic_with_known_roots() {
        // (1 − z/2)(1 − z/3)(1 + z/4) expanded.
        let phi = [1.0 / 2.0 + 1.0 / 3.0 - 1.0 / 4.0, -(1.0 / 6.0 - 1.0 / 8.0 - 1.0 / 12.0), -1.0 / 24.0];
        let mut m: Vec<f64> = ar_roots(&phi).unwrap().iter().map(|z| z.norm()).collect();
        m.sort_by(f64::total_cmp);
        for (got, want) in m.iter().zip([2.0, 3.0, 4.0]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn nonconvergence_is_reported_not_hidden() {
        assert!(polynomial_roots(&[1.0, f64::NAN, 1.0]).is_err());
        assert!(polynomial_roots(&[0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn root_probability_examples() {
        let same = vec![vec![0.3, 0.1]; 50];
        let r = unit_root_probability(&same, &[], &[1.05]).unwrap();
        assert_eq!(r.probabilities, vec![0.0]);
        let unit = vec![vec![1.0]; 50];
        let r = unit_root_probability(&unit, &[], &[1.01]).unwrap();
        assert_eq!(r.probabilities, vec![1.0]);
        assert!(unit_root_probability(&same, &[], &[0.9]).is_err());
        assert!(unit_root_probability(&same, &[], &[1.05, 1.01]).is_err());
    }

    proptest! {
        #[test]
        fn vieta_and_residual_checks(phi in prop::collection::vec(-1.5f64..1.5, 3..7)) {
            prop_assume!(phi.last().unwrap().abs() > 1e-3);
            let roots = ar_roots(&phi).unwrap();
            prop_assert_eq!(roots.len(), phi.len());
            let prod: f64 = roots.iter().map(|z| z.norm()).product();
            prop_assert!((prod * phi.last().unwrap().abs() - 1.0).abs() < 1e-8);
            for z in &roots {
                // Absolute for moderate roots; scaled by the term magnitudes for
                // the huge roots a small leading coefficient produces.
                let scale: f64 = 1.0 + phi.iter().enumerate().map(|(k, c)| c.abs() * z.norm().powi(k as i32 + 1)).sum::<f64>();
                let bound = if z.norm() <= 10.0 { 1e-8 } else { 1e-8 * scale };
                let resid = eval_ar(&phi, *z).norm();
                prop_assert!(resid < bound, "residual {} at {}", resid, z);
            }
        }

        #[test]
        fn quadratic_closed_form_matches_aberth(phi1 in -2.0f64..2.0, phi2 in -2.0f64..2.0) {
            prop_assume!(phi2.abs() > 1e-3);
            let closed = quadratic_roots(phi1, phi2);
            let iterated = polynomial_roots(&[1.0, -phi1, -phi2]).unwrap();
            for z in closed {
                let nearest = iterated.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
                prop_assert!(nearest < 1e-9, "{:?} vs {:?}", closed, iterated);
            }
        }

        #[test]
        fn probabilities_monotone(draws in prop::collection::vec(prop::collection::vec(-1.2f64..1.2, 2), 1..40)) {
            let r = unit_root_probability(&draws, &[], &DEFAULT_THRESHOLDS).unwrap();
            prop_assert!(r.probabilities.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(r.probabilities.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }
}

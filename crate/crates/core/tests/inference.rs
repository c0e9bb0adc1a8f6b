use barma::analysis::summarize_draws;
use barma::forecast::predictive_draws;
use barma::posterior::log_partial_likelihood;
use barma::sampler::run_chains;
use barma::select::{stepping_stone_log_ml, LadderSpec};
use barma::simulate::simulate_barma;
use barma::{
    AlphaPrior, BarmaPosterior, CovariateMatrix, Link, ModelOrder, ModelSpec, ObservationSeries, ParameterVector,
    PriorSpec, RngStream, SamplerConfig,
};

fn series(params: &ParameterVector, n: usize, seed: u64) -> ObservationSeries {
    simulate_barma(params, &params.order(), Link::Logit, n, 50, &CovariateMatrix::empty(0), &mut RngStream::new(seed))
        .unwrap()
        .series
}

fn intercept_only(y: &ObservationSeries, alpha_variance: f64, nu: f64) -> BarmaPosterior {
    let priors = PriorSpec { alpha: AlphaPrior::Normal { variance: alpha_variance }, ..PriorSpec::default() };
    let spec = ModelSpec::new(ModelOrder::new(0, 0, 0), Link::Logit, priors);
    BarmaPosterior::new(y.clone(), CovariateMatrix::empty(y.len()), spec).unwrap().with_fixed_nu(nu).unwrap()
}

#[test]
fn point_mass_prior_reduces_to_the_smaller_model() {
    let nu = 25.0;
    let y = series(&ParameterVector::new(nu, 0.0, vec![], vec![], vec![]).unwrap(), 80, 3);
    let order = ModelOrder::new(0, 0, 0);
    let fixed = ParameterVector::new(nu, 0.0, vec![], vec![], vec![]).unwrap();
    let smaller = log_partial_likelihood(&fixed, &y, &CovariateMatrix::empty(y.len()), &order, Link::Logit).unwrap();
    let ladder = LadderSpec::power(30, 5.0).unwrap().with_budget(200, 1000);
    let ml = stepping_stone_log_ml(&intercept_only(&y, 1e-12, nu), &ladder, 5).unwrap();
    assert!((ml.log_ml - smaller).abs() < 0.1, "{} vs {smaller}", ml.log_ml);
}

#[test]
fn doubling_the_ladder_agrees_within_three_standard_errors() {
    let nu = 15.0;
    let y = series(&ParameterVector::new(nu, -0.3, vec![], vec![], vec![]).unwrap(), 60, 8);
    let post = intercept_only(&y, 1.0, nu);
    let a = stepping_stone_log_ml(&post, &LadderSpec::power(15, 5.0).unwrap().with_budget(200, 1500), 1).unwrap();
    let b = stepping_stone_log_ml(&post, &LadderSpec::power(30, 5.0).unwrap().with_budget(200, 1500), 2).unwrap();
    let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
    assert!((a.log_ml - b.log_ml).abs() <= 3.0 * se, "{} vs {} (se {se})", a.log_ml, b.log_ml);
}

#[test]
fn posterior_covers_the_generating_parameters() {
    let truth = ParameterVector::new(60.0, 0.2, vec![], vec![0.5], vec![0.3]).unwrap();
    let y = series(&truth, 800, 21);
    let order = truth.order();
    let post = BarmaPosterior::new(y.clone(), CovariateMatrix::empty(y.len()), ModelSpec::new(order, Link::Logit, PriorSpec::default()))
        .unwrap();
    let set = run_chains(&post, &SamplerConfig { seed: 9, ..Default::default() }).unwrap();
    assert!(set.failures.is_empty());
    let summary = summarize_draws(&set.chains, &ParameterVector::names(&order), 0.99).unwrap();
    for (p, t) in summary.params.iter().zip(truth.flatten()) {
        assert!(p.lower <= t && t <= p.upper, "{}: {t} outside [{}, {}]", p.name, p.lower, p.upper);
        assert!(p.rhat.unwrap() < 1.05, "{} R-hat {:?}", p.name, p.rhat);
    }

    let fc = predictive_draws(&set.chains, &y, &CovariateMatrix::empty(y.len()), &order, Link::Logit, 4, 0.9, 2).unwrap();
    assert_eq!(fc.horizon(), 4);
    for k in 0..4 {
        assert!(fc.summary.lower[k] < fc.summary.mean[k] && fc.summary.mean[k] < fc.summary.upper[k]);
    }
    // Intervals widen with the horizon as uncertainty accumulates.
    assert!(fc.summary.upper[3] - fc.summary.lower[3] >= 0.9 * (fc.summary.upper[0] - fc.summary.lower[0]));
}

//! Run configuration: defaults, key=value files and command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use barma::analysis::DEFAULT_THRESHOLDS;
use barma::posterior::{gamma_prior_from_mean_var, FLAT_VARIANCE};
use barma::simulate::DEFAULT_BURN_IN;
use barma::{AlphaPrior, Link, ParameterVector, PriorSpec, SamplerConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Fit,
    Forecast,
    Simulate,
    Select,
    Unitroot,
    McStudy,
}

impl Command {
    pub const ALL: [Command; 6] =
        [Command::Fit, Command::Forecast, Command::Simulate, Command::Select, Command::Unitroot, Command::McStudy];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Forecast => "forecast",
            Command::Simulate => "simulate",
            Command::Select => "select",
            Command::Unitroot => "unitroot",
            Command::McStudy => "mc-study",
        }
    }

    pub fn about(&self) -> &'static str {
        match self {
            Command::Fit => "Sample the posterior and write draws, summaries and densities",
            Command::Forecast => "Fit, then simulate the posterior predictive h steps ahead",
            Command::Simulate => "Generate a series from given parameters",
            Command::Select => "Estimate log marginal likelihoods over a (p,q) grid",
            Command::Unitroot => "Fit, then report quasi-unit-root probabilities",
            Command::McStudy => "Run a simulate-and-fit Monte Carlo study",
        }
    }

    pub fn parse(name: &str) -> CliResult<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| CliError::Config(format!("unknown command {name:?}")))
    }
}

/// A configuration key: file name, flag name, default and help text.
pub struct Key {
    pub name: &'static str,
    pub flag: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

macro_rules! keys {
    ($($name:literal, $flag:literal, $default:expr, $help:literal;)*) => {
        pub const KEYS: &[Key] = &[$(Key { name: $name, flag: $flag, default: $default, help: $help }),*];
    };
}

keys! {
    "input", "input", "", "CSV file: header row, response first, covariates after";
    "future_covariates", "future-covariates", "", "CSV of known future covariate rows for forecasting";
    "out", "out", "barma-out", "output directory";
    "seed", "seed", "1", "random seed";
    "link", "link", "logit", "link function: logit or cloglog";
    "p", "p", "1", "AR order";
    "q", "q", "0", "MA order";
    "nu_shape", "nu-shape", "5", "gamma prior shape for nu";
    "nu_rate", "nu-rate", "0.1", "gamma prior rate for nu";
    "nu_prior_mean", "nu-prior-mean", "", "prior mean for nu (with nu_prior_var, overrides shape/rate)";
    "nu_prior_var", "nu-prior-var", "", "prior variance for nu";
    "prior_variance", "prior-variance", "400000000", "normal prior variance for beta, phi, theta";
    "alpha_prior", "alpha-prior", "normal", "intercept prior: normal or uniform (on (-1,1))";
    "alpha_variance", "alpha-variance", "", "normal intercept prior variance (default: prior_variance)";
    "chains", "chains", "2", "number of chains";
    "iterations", "iterations", "2000", "iterations per chain, warm-up included";
    "warmup", "warmup", "0.5", "warm-up fraction";
    "target_accept", "target-accept", "0.8", "step-size adaptation target";
    "max_depth", "max-depth", "10", "maximum NUTS tree depth";
    "level", "level", "0.95", "credible / predictive interval level";
    "thresholds", "thresholds", "1.01,1.02,1.03,1.04,1.05", "root-modulus thresholds";
    "thin", "thin", "1", "keep every k-th draw in draws.csv";
    "horizon", "horizon", "6", "forecast horizon";
    "holdout", "holdout", "0", "trailing observations held out and used as actuals";
    "n", "n", "500", "simulated series length";
    "burn_in", "burn-in", "50", "simulation burn-in";
    "nu", "nu", "50", "true precision (simulate, mc-study)";
    "alpha", "alpha", "0", "true intercept (simulate, mc-study)";
    "phi", "phi", "", "true AR coefficients, comma separated";
    "theta", "theta", "", "true MA coefficients, comma separated";
    "grid", "grid", "0,1;1,0;1,1;1,2;2,1", "orders to compare: p,q pairs separated by ';'";
    "rungs", "rungs", "30", "stepping-stone temperature steps K";
    "ladder_exponent", "ladder-exponent", "5", "temperatures t_k = (k/K)^exponent";
    "rung_warmup", "rung-warmup", "250", "warm-up iterations per rung";
    "rung_draws", "rung-draws", "1000", "draws per rung";
    "replicates", "replicates", "10", "Monte Carlo replicates per cell";
    "sizes", "sizes", "500", "sample sizes for mc-study, comma separated";
    "unit_root", "unit-root", "false", "mc-study: also compute unit-root probabilities";
}

/// Keys that never enter the manifest.
const META_KEYS: [&str; 2] = ["command", "version"];

/// Parses a key=value file; `#` starts a comment line.
pub fn read_config_file(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input { path: path.display().to_string(), message: e.to_string() })?;
    parse_config_text(&text).map_err(|m| CliError::Input { path: path.display().to_string(), message: m })
}

pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub input: Option<PathBuf>,
    pub future_covariates: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub link: Link,
    pub p: usize,
    pub q: usize,
    pub priors: PriorSpec,
    pub sampler: SamplerConfig,
    pub level: f64,
    pub thresholds: Vec<f64>,
    pub thin: usize,
    pub horizon: usize,
    pub holdout: usize,
    pub n: usize,
    pub burn_in: usize,
    pub nu: f64,
    pub alpha: f64,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub grid: Vec<(usize, usize)>,
    pub rungs: usize,
    pub ladder_exponent: f64,
    pub rung_warmup: usize,
    pub rung_draws: usize,
    pub replicates: usize,
    pub sizes: Vec<usize>,
    pub unit_root: bool,
    /// Every key with its effective value, in table order.
    pub resolved: Vec<(String, String)>,
}

fn parse<T: FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.parse().map_err(|_| CliError::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> CliResult<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn parse_grid(v: &str) -> CliResult<Vec<(usize, usize)>> {
    v.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let parts: Vec<usize> = parse_list("grid", pair)?;
            match parts.as_slice() {
                [p, q] => Ok((*p, *q)),
                _ => Err(CliError::Config(format!("grid: {pair:?} is not a p,q pair"))),
            }
        })
        .collect()
}

impl RunConfig {
    /// Merges `file` (lower precedence) with `flags` and applies defaults.
    pub fn resolve(
        command: Command,
        file: &BTreeMap<String, String>,
        flags: &BTreeMap<String, String>,
    ) -> CliResult<Self> {
        for (k, v) in file {
            if k == "command" && v != command.name() {
                return Err(CliError::Config(format!(
                    "configuration is for command {v:?}, not {:?}",
                    command.name()
                )));
            }
            if !META_KEYS.contains(&k.as_str()) && !KEYS.iter().any(|key| key.name == k) {
                return Err(CliError::Config(format!("unknown configuration key {k:?}")));
            }
        }
        let mut values = BTreeMap::new();
        let mut resolved = Vec::with_capacity(KEYS.len());
        for key in KEYS {
            let v = flags.get(key.name).or_else(|| file.get(key.name)).cloned().unwrap_or_else(|| key.default.to_string());
            values.insert(key.name, v.clone());
            resolved.push((key.name.to_string(), v));
        }
        let get = |k: &str| values[k].as_str();
        let path = |k: &str| (!get(k).is_empty()).then(|| PathBuf::from(get(k)));

        let seed: u64 = parse("seed", get("seed"))?;
        let link = Link::parse(get("link")).map_err(|e| CliError::Config(e.to_string()))?;
        let prior_variance: f64 = parse("prior_variance", get("prior_variance"))?;
        let alpha = match get("alpha_prior") {
            "uniform" => AlphaPrior::Uniform,
            "normal" => AlphaPrior::Normal {
                variance: if get("alpha_variance").is_empty() {
                    prior_variance
                } else {
                    parse("alpha_variance", get("alpha_variance"))?
                },
            },
            other => return Err(CliError::Config(format!("alpha_prior: expected normal or uniform, got {other:?}"))),
        };
        let (nu_shape, nu_rate) = match (get("nu_prior_mean"), get("nu_prior_var")) {
            ("", "") => (parse("nu_shape", get("nu_shape"))?, parse("nu_rate", get("nu_rate"))?),
            (m, v) if !m.is_empty() && !v.is_empty() => {
                gamma_prior_from_mean_var(parse("nu_prior_mean", m)?, parse("nu_prior_var", v)?)?
            }
            _ => return Err(CliError::Config("nu_prior_mean and nu_prior_var must be given together".into())),
        };
        let priors = PriorSpec {
            nu_shape,
            nu_rate,
            alpha,
            sigma2_beta: prior_variance,
            sigma2_phi: prior_variance,
            sigma2_theta: prior_variance,
        };
        priors.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let sampler = SamplerConfig {
            n_chains: parse("chains", get("chains"))?,
            n_iterations: parse("iterations", get("iterations"))?,
            warmup_fraction: parse("warmup", get("warmup"))?,
            target_accept: parse("target_accept", get("target_accept"))?,
            max_depth: parse("max_depth", get("max_depth"))?,
            seed,
        };
        let thresholds: Vec<f64> = parse_list("thresholds", get("thresholds"))?;
        let cfg = RunConfig {
            command,
            input: path("input"),
            future_covariates: path("future_covariates"),
            out: PathBuf::from(get("out")),
            seed,
            link,
            p: parse("p", get("p"))?,
            q: parse("q", get("q"))?,
            priors,
            sampler,
            level: parse("level", get("level"))?,
            thresholds: if thresholds.is_empty() { DEFAULT_THRESHOLDS.to_vec() } else { thresholds },
            thin: parse("thin", get("thin"))?,
            horizon: parse("horizon", get("horizon"))?,
            holdout: parse("holdout", get("holdout"))?,
            n: parse("n", get("n"))?,
            burn_in: if get("burn_in").is_empty() { DEFAULT_BURN_IN } else { parse("burn_in", get("burn_in"))? },
            nu: parse("nu", get("nu"))?,
            alpha: parse("alpha", get("alpha"))?,
            phi: parse_list("phi", get("phi"))?,
            theta: parse_list("theta", get("theta"))?,
            grid: parse_grid(get("grid"))?,
            rungs: parse("rungs", get("rungs"))?,
            ladder_exponent: parse("ladder_exponent", get("ladder_exponent"))?,
            rung_warmup: parse("rung_warmup", get("rung_warmup"))?,
            rung_draws: parse("rung_draws", get("rung_draws"))?,
            replicates: parse("replicates", get("replicates"))?,
            sizes: parse_list("sizes", get("sizes"))?,
            unit_root: parse("unit_root", get("unit_root"))?,
            resolved,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        let needs_input =
            matches!(self.command, Command::Fit | Command::Forecast | Command::Select | Command::Unitroot);
        if needs_input && self.input.is_none() {
            return bad(format!("{} needs an input file (input=...)", self.command.name()));
        }
        let fits = !matches!(self.command, Command::Simulate | Command::Select);
        if fits {
            self.sampler.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("level {} outside (0,1)", self.level));
        }
        if self.thin == 0 {
            return bad("thin must be at least 1".into());
        }
        if self.command == Command::Forecast && self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.command == Command::Unitroot && self.p == 0 {
            return bad("unitroot needs p ≥ 1".into());
        }
        if self.thresholds.iter().any(|&c| !(c >= 1.0)) || self.thresholds.windows(2).any(|w| w[1] < w[0]) {
            return bad("thresholds must be sorted and at least 1".into());
        }
        if self.command == Command::Select && self.grid.is_empty() {
            return bad("grid is empty".into());
        }
        if matches!(self.command, Command::Simulate | Command::McStudy) {
            self.truth().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if self.command == Command::McStudy && (self.sizes.is_empty() || self.replicates == 0) {
            return bad("mc-study needs sizes and at least one replicate".into());
        }
        Ok(())
    }

    /// True parameters for simulation commands.
    pub fn truth(&self) -> barma::Result<ParameterVector> {
        ParameterVector::new(self.nu, self.alpha, Vec::new(), self.phi.clone(), self.theta.clone())
    }

    /// Manifest text: command, tool version and every effective key.
    pub fn manifest(&self) -> String {
        let mut s = format!("command={}\nversion={}\n", self.command.name(), env!("CARGO_PKG_VERSION"));
        for (k, v) in &self.resolved {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::resolve(Command::Simulate, &BTreeMap::new(), &BTreeMap::new()).expect("defaults are valid")
    }
}

/// The default normal variance, for documentation and tests.
pub const DEFAULT_PRIOR_VARIANCE: f64 = FLAT_VARIANCE;

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_resolve() {
        let c = RunConfig::resolve(Command::Simulate, &BTreeMap::new(), &BTreeMap::new()).unwrap();
        assert_eq!(c.priors.nu_shape, 5.0);
        assert_eq!(c.priors.sigma2_phi, DEFAULT_PRIOR_VARIANCE);
        assert_eq!(c.grid.len(), 5);
        assert_eq!(c.resolved.len(), KEYS.len());
    }

    #[test]
    fn flags_override_file() {
        let file = parse_config_text("# comment\nseed = 7\np=2\n").unwrap();
        let c = RunConfig::resolve(Command::Simulate, &file, &flags(&[("seed", "9")])).unwrap();
        assert_eq!((c.seed, c.p), (9, 2));
    }

    #[test]
    fn manifest_round_trips() {
        let c = RunConfig::resolve(Command::Simulate, &BTreeMap::new(), &flags(&[("phi", "0.5,-0.2"), ("seed", "3")]))
            .unwrap();
        let again = RunConfig::resolve(Command::Simulate, &parse_config_text(&c.manifest()).unwrap(), &BTreeMap::new())
            .unwrap();
        assert_eq!(c.manifest(), again.manifest());
        assert_eq!(again.phi, vec![0.5, -0.2]);
    }

    #[test]
    fn rejects_bad_values() {
        let none = BTreeMap::new();
        assert!(RunConfig::resolve(Command::Fit, &none, &none).is_err());
        assert!(RunConfig::resolve(Command::Simulate, &flags(&[("bogus", "1")]), &none).is_err());
        assert!(RunConfig::resolve(Command::Simulate, &none, &flags(&[("link", "probit")])).is_err());
        assert!(RunConfig::resolve(Command::Simulate, &none, &flags(&[("grid", "1,2,3")])).is_err());
        assert!(RunConfig::resolve(Command::Fit, &flags(&[("command", "select")]), &flags(&[("input", "x")])).is_err());
    }

    #[test]
    fn prior_from_mean_and_variance() {
        let none = BTreeMap::new();
        let c = RunConfig::resolve(Command::Simulate, &none, &flags(&[("nu_prior_mean", "100"), ("nu_prior_var", "2000")]))
            .unwrap();
        assert_eq!((c.priors.nu_shape, c.priors.nu_rate), (5.0, 0.05));
    }
}

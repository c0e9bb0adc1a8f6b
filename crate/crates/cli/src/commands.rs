//! Command implementations. Every command writes into `cfg.out` and leaves a
//! manifest from which the run can be repeated.

use std::fs;
use std::path::Path;

use barma::analysis::{root_report_from_chains, summarize_draws, PosteriorSummary};
use barma::forecast::predictive_draws;
use barma::sampler::{run_chains, ChainSet};
use barma::select::{order_search, LadderSpec};
use barma::simulate::{mc_experiment, simulate_barma, StudyCell, StudyDesign};
use barma::{
    BarmaPosterior, CovariateMatrix, ModelOrder, ModelSpec, ObservationSeries, ParameterVector, RngStream,
};

use crate::config::{Command, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::{kde_grid, load_matrix, load_series, num, opt_num, write_csv};

const DENSITY_POINTS: usize = 128;

/// Runs one command; returns warnings for the caller to print.
pub fn run_command(cfg: &RunConfig) -> CliResult<Vec<String>> {
    fs::create_dir_all(&cfg.out)?;
    let warnings = match cfg.command {
        Command::Fit => fit(cfg)?,
        Command::Forecast => forecast(cfg)?,
        Command::Simulate => simulate(cfg)?,
        Command::Select => select(cfg)?,
        Command::Unitroot => unitroot(cfg)?,
        Command::McStudy => mc_study(cfg)?,
    };
    fs::write(cfg.out.join("manifest.txt"), cfg.manifest())?;
    Ok(warnings)
}

fn input(cfg: &RunConfig) -> CliResult<(ObservationSeries, CovariateMatrix)> {
    let path = cfg.input.as_ref().ok_or_else(|| CliError::Config("no input file".into()))?;
    load_series(path)
}

struct Fitted {
    order: ModelOrder,
    chains: ChainSet,
    summary: PosteriorSummary,
    warnings: Vec<String>,
}

fn fit_series(cfg: &RunConfig, series: ObservationSeries, covariates: CovariateMatrix) -> CliResult<Fitted> {
    let order = ModelOrder::new(cfg.p, cfg.q, covariates.n_cols());
    let posterior = BarmaPosterior::new(series, covariates, ModelSpec::new(order, cfg.link, cfg.priors))?;
    let chains = run_chains(&posterior, &cfg.sampler)?;
    let summary = summarize_draws(&chains.chains, &ParameterVector::names(&order), cfg.level)?;
    let mut warnings: Vec<String> = chains.failures.iter().map(|(i, e)| format!("chain {i} failed: {e}")).collect();
    let divergent: usize = chains.chains.iter().map(|c| c.n_divergent()).sum();
    if divergent > 0 {
        warnings.push(format!("{divergent} divergent transitions after warm-up"));
    }
    Ok(Fitted { order, chains, summary, warnings })
}

fn write_fit_outputs(dir: &Path, cfg: &RunConfig, fitted: &Fitted) -> CliResult<()> {
    let names = ParameterVector::names(&fitted.order);
    let mut header = vec!["chain", "iteration"];
    header.extend(names.iter().map(String::as_str));
    header.extend(["accept_stat", "tree_depth", "n_leapfrog", "divergent"]);
    let rows = fitted.chains.chains.iter().flat_map(|c| {
        (0..c.len()).step_by(cfg.thin).map(move |i| {
            let mut row = vec![c.chain.to_string(), (c.n_warmup + i + 1).to_string()];
            row.extend(c.draws[i].iter().map(|&v| num(v)));
            row.push(num(c.accept_stat[i]));
            row.push(c.tree_depth[i].to_string());
            row.push(c.n_leapfrog[i].to_string());
            row.push(u8::from(c.divergent[i]).to_string());
            row
        })
    });
    write_csv(&dir.join("draws.csv"), &header, rows)?;

    let s = &fitted.summary;
    write_csv(
        &dir.join("summary.csv"),
        &["parameter", "mean", "sd", "median", "lower", "upper", "level", "ess", "rhat"],
        s.params.iter().map(|p| {
            vec![
                p.name.clone(),
                num(p.mean),
                num(p.sd),
                num(p.median),
                num(p.lower),
                num(p.upper),
                num(s.level),
                opt_num(p.ess),
                opt_num(p.rhat),
            ]
        }),
    )?;

    write_csv(
        &dir.join("diagnostics.csv"),
        &["chain", "status", "step_size", "mean_accept", "divergent", "draws"],
        fitted
            .chains
            .chains
            .iter()
            .map(|c| {
                vec![
                    c.chain.to_string(),
                    "ok".into(),
                    num(c.step_size),
                    num(c.mean_accept()),
                    c.n_divergent().to_string(),
                    c.len().to_string(),
                ]
            })
            .chain(fitted.chains.failures.iter().map(|(i, e)| {
                vec![i.to_string(), format!("failed: {e}"), "NA".into(), "NA".into(), "NA".into(), "0".into()]
            })),
    )?;

    let density_rows = names.iter().enumerate().flat_map(|(j, name)| {
        let col: Vec<f64> = fitted.chains.chains.iter().flat_map(|c| c.column(j)).collect();
        kde_grid(&col, DENSITY_POINTS).into_iter().map(move |(x, d)| vec![name.clone(), num(x), num(d)])
    });
    write_csv(&dir.join("density.csv"), &["parameter", "x", "density"], density_rows.collect::<Vec<_>>())?;

    if fitted.order.p > 0 {
        write_unitroot(dir, cfg, fitted)?;
    }
    Ok(())
}

fn write_unitroot(dir: &Path, cfg: &RunConfig, fitted: &Fitted) -> CliResult<()> {
    let report = root_report_from_chains(&fitted.chains.chains, &fitted.order, &cfg.thresholds)?;
    write_csv(
        &dir.join("unitroot.csv"),
        &["threshold", "probability"],
        report.thresholds.iter().zip(&report.probabilities).map(|(c, p)| vec![num(*c), num(*p)]),
    )?;
    let has_ma = !report.ma_moduli.is_empty() && fitted.order.q > 0;
    write_csv(
        &dir.join("root_moduli.csv"),
        &["draw", "ar_min_modulus", "ma_min_modulus"],
        report.moduli.iter().enumerate().map(|(i, m)| {
            let ma = if has_ma { num(report.ma_moduli[i]) } else { "NA".into() };
            vec![(i + 1).to_string(), num(*m), ma]
        }),
    )?;
    Ok(())
}

fn fit(cfg: &RunConfig) -> CliResult<Vec<String>> {
    let (series, covariates) = input(cfg)?;
    let fitted = fit_series(cfg, series, covariates)?;
    write_fit_outputs(&cfg.out, cfg, &fitted)?;
    Ok(fitted.warnings)
}

fn unitroot(cfg: &RunConfig) -> CliResult<Vec<String>> {
    let (series, covariates) = input(cfg)?;
    let fitted = fit_series(cfg, series, covariates)?;
    write_unitroot(&cfg.out, cfg, &fitted)?;
    Ok(fitted.warnings)
}

fn forecast(cfg: &RunConfig) -> CliResult<Vec<String>> {
    let (series, covariates) = input(cfg)?;
    let n = series.len();
    if cfg.holdout >= n {
        return Err(CliError::Config(format!("holdout {} leaves no data from {n} observations", cfg.holdout)));
    }
    let keep = n - cfg.holdout;
    let history = series.head(keep)?;
    let actuals = series.values()[keep..].to_vec();
    // Held-out covariate rows become the first future rows; supplied future
    // rows follow them.
    let mut cov_hist = covariates.split_future(keep)?;
    if let (Some(path), true) = (&cfg.future_covariates, covariates.n_cols() > 0) {
        let mut rows: Vec<Vec<f64>> = (0..cfg.holdout).map(|k| cov_hist.future_row(k).to_vec()).collect();
        rows.extend(load_matrix(path)?);
        cov_hist = cov_hist.with_future(&rows)?;
    }
    let fitted = fit_series(cfg, history.clone(), cov_hist.clone())?;
    let result = predictive_draws(
        &fitted.chains.chains,
        &history,
        &cov_hist,
        &fitted.order,
        cfg.link,
        cfg.horizon,
        cfg.level,
        RngStream::new(cfg.seed).split(u64::MAX).seed(),
    )?;
    let scored = actuals.len().min(cfg.horizon);
    let report = barma::forecast::mae(&result.point()[..scored], &actuals[..scored])?;
    let rows = (0..cfg.horizon).map(|k| {
        let s = &result.summary;
        let (actual, abs, cum) = if k < scored {
            (num(actuals[k]), num(report.absolute[k]), num(report.cumulative[k]))
        } else {
            ("NA".into(), "NA".into(), "NA".into())
        };
        vec![(k + 1).to_string(), num(s.mean[k]), num(s.lower[k]), num(s.upper[k]), num(s.level), actual, abs, cum]
    });
    write_csv(
        &cfg.out.join("forecast.csv"),
        &["horizon", "mean", "lower", "upper", "level", "actual", "abs_error", "mae"],
        rows,
    )?;
    let mut header = vec!["draw".to_string()];
    header.extend((1..=cfg.horizon).map(|k| format!("h{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(
        &cfg.out.join("predictive_draws.csv"),
        &header,
        result.draws.iter().enumerate().map(|(i, row)| {
            std::iter::once((i + 1).to_string()).chain(row.iter().map(|&v| num(v))).collect()
        }),
    )?;
    write_fit_outputs(&cfg.out, cfg, &fitted)?;
    Ok(fitted.warnings)
}

fn simulate(cfg: &RunConfig) -> CliResult<Vec<String>> {
    let truth = cfg.truth()?;
    let order = truth.order();
    let mut rng = RngStream::new(cfg.seed);
    let sim = simulate_barma(&truth, &order, cfg.link, cfg.n, cfg.burn_in, &CovariateMatrix::empty(0), &mut rng)?;
    write_csv(&cfg.out.join("series.csv"), &["y"], sim.series.values().iter().map(|&y| vec![num(y)]))?;
    write_csv(
        &cfg.out.join("mu.csv"),
        &["t", "mu"],
        sim.mu.iter().enumerate().map(|(t, &m)| vec![(t + 1).to_string(), num(m)]),
    )?;
    Ok(Vec::new())
}

fn select(cfg: &RunConfig) -> CliResult<Vec<String>> {
    let (series, covariates) = input(cfg)?;
    let mut ladder = LadderSpec::power(cfg.rungs, cfg.ladder_exponent)?.with_budget(cfg.rung_warmup, cfg.rung_draws);
    ladder.target_accept = cfg.sampler.target_accept;
    ladder.max_depth = cfg.sampler.max_depth;
    let report = order_search(&series, &covariates, &cfg.grid, cfg.link, &cfg.priors, &ladder, cfg.seed)?;
    let best = report.entries[report.selected].log_ml;
    let mut rows: Vec<Vec<String>> = report
        .entries
        .iter()
        .map(|e| {
            let bf = match (best, e.log_ml) {
                (Some(b), Some(v)) => num(barma::select::log_bayes_factor(b, v)),
                _ => "NA".into(),
            };
            vec![
                "log_ml".into(),
                e.p.to_string(),
                e.q.to_string(),
                opt_num(e.log_ml),
                opt_num(e.std_error),
                bf,
                e.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    let (p, q) = report.selected_order();
    rows.push(vec!["selected".into(), p.to_string(), q.to_string(), opt_num(best), "NA".into(), num(0.0), String::new()]);
    write_csv(
        &cfg.out.join("selection.csv"),
        &["row", "p", "q", "log_ml", "std_error", "log_bf_selected_vs_row", "error"],
        rows,
    )?;
    let pairs = (0..report.entries.len()).flat_map(|i| (0..report.entries.len()).map(move |j| (i, j)));
    write_csv(
        &cfg.out.join("bayes_factors.csv"),
        &["p_a", "q_a", "p_b", "q_b", "log_bf"],
        pairs.filter(|(i, j)| i != j).map(|(i, j)| {
            let (a, b) = (&report.entries[i], &report.entries[j]);
            vec![a.p.to_string(), a.q.to_string(), b.p.to_string(), b.q.to_string(), opt_num(report.log_bayes_factor(i, j))]
        }),
    )?;
    let mut warnings = report.warnings.clone();
    warnings.extend(report.entries.iter().filter_map(|e| e.error.as_ref().map(|m| format!("order ({},{}) failed: {m}", e.p, e.q))));
    Ok(warnings)
}

fn mc_study(cfg: &RunConfig) -> CliResult<Vec<String>> {
    let truth = cfg.truth()?;
    let cells = cfg
        .sizes
        .iter()
        .map(|&n| StudyCell { label: format!("n={n}"), truth: truth.clone(), n, priors: cfg.priors, unit_root: cfg.unit_root })
        .collect();
    let mut design = StudyDesign::new(cells, cfg.seed);
    design.replicates = cfg.replicates;
    design.burn_in = cfg.burn_in;
    design.link = cfg.link;
    design.sampler = cfg.sampler;
    design.level = cfg.level;
    design.thresholds = cfg.thresholds.clone();
    let report = mc_experiment(&design)?;
    let names = ParameterVector::names(&truth.order());

    let mut header: Vec<String> = ["cell", "n", "replicate", "seed", "status"].map(String::from).to_vec();
    for prefix in ["mean", "lower", "upper", "covered"] {
        header.extend(names.iter().map(|nm| format!("{prefix}_{nm}")));
    }
    if cfg.unit_root && truth.order().p > 0 {
        header.extend(report.thresholds.iter().map(|c| format!("p_modulus_lt_{c}")));
    }
    let width = header.len();
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(
        &cfg.out.join("study_replicates.csv"),
        &header_ref,
        report.records.iter().map(|r| {
            let mut row = vec![
                r.cell.to_string(),
                design.cells[r.cell].n.to_string(),
                (r.replicate + 1).to_string(),
                r.seed.to_string(),
                r.error.clone().map_or_else(|| "ok".into(), |e| format!("failed: {e}")),
            ];
            row.extend(r.means.iter().chain(&r.lower).chain(&r.upper).map(|&v| num(v)));
            row.extend(r.covered.iter().map(|&c| u8::from(c).to_string()));
            row.extend(r.root_probabilities.iter().map(|&p| num(p)));
            row.resize(width, "NA".into());
            row
        }),
    )?;

    let mut rows = Vec::new();
    for c in &report.cells {
        for (j, name) in c.names.iter().enumerate() {
            rows.push(vec![
                c.label.clone(),
                name.clone(),
                num(c.truth[j]),
                num(c.mean[j]),
                num(c.lower[j]),
                num(c.upper[j]),
                num(c.coverage[j]),
                c.completed.to_string(),
                c.attempted.to_string(),
                c.succeeded.to_string(),
            ]);
        }
    }
    write_csv(
        &cfg.out.join("study_summary.csv"),
        &["cell", "parameter", "truth", "avg_mean", "avg_lower", "avg_upper", "coverage", "completed", "attempted", "succeeded"],
        rows,
    )?;
    if report.cells.iter().any(|c| !c.root_probabilities.is_empty()) {
        write_csv(
            &cfg.out.join("study_unitroot.csv"),
            &["cell", "threshold", "avg_probability"],
            report.cells.iter().flat_map(|c| {
                report.thresholds.iter().zip(&c.root_probabilities).map(|(t, p)| vec![c.label.clone(), num(*t), num(*p)])
            }),
        )?;
    }

    let mut warnings: Vec<String> = report
        .records
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("cell {} replicate {} failed: {e}", r.cell, r.replicate + 1)))
        .collect();
    warnings.extend(report.cells.iter().filter(|c| !c.succeeded).map(|c| format!("cell {} did not reach 80% completion", c.label)));
    Ok(warnings)
}

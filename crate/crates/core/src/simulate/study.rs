use rayon::prelude::*;

use super::{simulate_barma, RngStream, DEFAULT_BURN_IN};
use crate::analysis::{root_report_from_chains, summarize_draws, DEFAULT_THRESHOLDS};
use crate::error::{BarmaError, Result};
use crate::model::{CovariateMatrix, Link, ParameterVector};
use crate::posterior::{BarmaPosterior, ModelSpec, PriorSpec};
use crate::sampler::{run_chains, SamplerConfig};

/// Fraction of replicates that must finish for a cell to count as done.
pub const MIN_CELL_SUCCESS: f64 = 0.8;

/// One design point: a true parameter, a sample size and the fitting prior.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyCell {
    pub label: String,
    pub truth: ParameterVector,
    pub n: usize,
    pub priors: PriorSpec,
    /// Also compute quasi-unit-root probabilities for the AR part.
    pub unit_root: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyDesign {
    pub cells: Vec<StudyCell>,
    pub replicates: usize,
    pub burn_in: usize,
    pub link: Link,
    pub sampler: SamplerConfig,
    pub level: f64,
    pub thresholds: Vec<f64>,
    pub seed: u64,
}

impl StudyDesign {
    /// Desk-scale defaults: 10 replicates, burn-in 50, 2 chains × 2000.
    pub fn new(cells: Vec<StudyCell>, seed: u64) -> Self {
        Self {
            cells,
            replicates: 10,
            burn_in: DEFAULT_BURN_IN,
            link: Link::Logit,
            sampler: SamplerConfig { n_chains: 2, n_iterations: 2000, seed, ..SamplerConfig::default() },
            level: 0.95,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(BarmaError::Domain("replicate count must be at least 1".into()));
        }
        if self.cells.is_empty() {
            return Err(BarmaError::Domain("study has no cells".into()));
        }
        for c in &self.cells {
            c.truth.validate()?;
            c.priors.validate()?;
            if c.truth.order().r > 0 {
                return Err(BarmaError::Domain(format!("cell {}: covariate designs are not supported", c.label)));
            }
            if c.n <= c.truth.order().start_index() {
                return Err(BarmaError::Insufficient(format!("cell {}: n={} too short", c.label, c.n)));
            }
        }
        self.sampler.validate()
    }
}

/// Outcome of one simulate-and-fit replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub cell: usize,
    pub replicate: usize,
    /// Seed of the simulated series; the fit uses `seed + 1`.
    pub seed: u64,
    pub error: Option<String>,
    pub means: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub covered: Vec<bool>,
    pub root_probabilities: Vec<f64>,
}

impl ReplicateRecord {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Averages across the successful replicates of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub cell: usize,
    pub label: String,
    pub names: Vec<String>,
    pub truth: Vec<f64>,
    pub completed: usize,
    pub attempted: usize,
    pub succeeded: bool,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub coverage: Vec<f64>,
    pub root_probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub thresholds: Vec<f64>,
    pub records: Vec<ReplicateRecord>,
    pub cells: Vec<CellSummary>,
}

fn run_replicate(design: &StudyDesign, cell_idx: usize, rep: usize) -> ReplicateRecord {
    let cell = &design.cells[cell_idx];
    let seed = RngStream::new(design.seed).split(cell_idx as u64).split(rep as u64).seed();
    let mut record = ReplicateRecord {
        cell: cell_idx,
        replicate: rep,
        seed,
        error: None,
        means: Vec::new(),
        lower: Vec::new(),
        upper: Vec::new(),
        covered: Vec::new(),
        root_probabilities: Vec::new(),
    };
    match fit_replicate(design, cell, seed) {
        Ok((means, lower, upper, roots)) => {
            let truth = cell.truth.flatten();
            record.covered = truth.iter().zip(lower.iter().zip(&upper)).map(|(t, (l, u))| l <= t && t <= u).collect();
            record.means = means;
            record.lower = lower;
            record.upper = upper;
            record.root_probabilities = roots;
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

type Fit = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

fn fit_replicate(design: &StudyDesign, cell: &StudyCell, seed: u64) -> Result<Fit> {
    let order = cell.truth.order();
    let mut rng = RngStream::new(seed);
    let empty = CovariateMatrix::empty(0);
    let sim = simulate_barma(&cell.truth, &order, design.link, cell.n, design.burn_in, &empty, &mut rng)?;
    let spec = ModelSpec::new(order, design.link, cell.priors);
    let posterior = BarmaPosterior::new(sim.series, CovariateMatrix::empty(cell.n), spec)?;
    let config = SamplerConfig { seed: seed.wrapping_add(1), ..design.sampler };
    let set = run_chains(&posterior, &config)?;
    let summary = summarize_draws(&set.chains, &ParameterVector::names(&order), design.level)?;
    let roots = if cell.unit_root && order.p > 0 {
        root_report_from_chains(&set.chains, &order, &design.thresholds)?.probabilities
    } else {
        Vec::new()
    };
    let col = |f: fn(&crate::analysis::ParamSummary) -> f64| summary.params.iter().map(f).collect::<Vec<_>>();
    Ok((col(|p| p.mean), col(|p| p.lower), col(|p| p.upper), roots))
}

fn average(rows: &[&Vec<f64>], width: usize) -> Vec<f64> {
    if rows.is_empty() {
        return vec![f64::NAN; width];
    }
    let mut acc = vec![0.0; width];
    for r in rows {
        for (a, v) in acc.iter_mut().zip(r.iter()) {
            *a += v;
        }
    }
    acc.iter().map(|a| a / rows.len() as f64).collect()
}

/// Simulates and fits every cell × replicate in parallel and aggregates.
///
/// Each replicate draws from its own stream split off the design seed, so the
/// report does not depend on scheduling. A replicate failure is recorded and
/// the cell still succeeds when at least 80% of its replicates finish.
pub fn mc_experiment(design: &StudyDesign) -> Result<StudyReport> {
    design.validate()?;
    let jobs: Vec<(usize, usize)> =
        (0..design.cells.len()).flat_map(|c| (0..design.replicates).map(move |r| (c, r))).collect();
    let records: Vec<ReplicateRecord> = jobs.par_iter().map(|&(c, r)| run_replicate(design, c, r)).collect();

    let cells = design
        .cells
        .iter()
        .enumerate()
        .map(|(ci, cell)| {
            let order = cell.truth.order();
            let d = order.dim();
            let ok: Vec<&ReplicateRecord> = records.iter().filter(|r| r.cell == ci && r.ok()).collect();
            let coverage = (0..d)
                .map(|j| {
                    if ok.is_empty() {
                        f64::NAN
                    } else {
                        ok.iter().filter(|r| r.covered[j]).count() as f64 / ok.len() as f64
                    }
                })
                .collect();
            let roots: Vec<&Vec<f64>> =
                ok.iter().map(|r| &r.root_probabilities).filter(|v| !v.is_empty()).collect();
            CellSummary {
                cell: ci,
                label: cell.label.clone(),
                names: ParameterVector::names(&order),
                truth: cell.truth.flatten(),
                completed: ok.len(),
                attempted: design.replicates,
                succeeded: ok.len() as f64 >= MIN_CELL_SUCCESS * design.replicates as f64,
                mean: average(&ok.iter().map(|r| &r.means).collect::<Vec<_>>(), d),
                lower: average(&ok.iter().map(|r| &r.lower).collect::<Vec<_>>(), d),
                upper: average(&ok.iter().map(|r| &r.upper).collect::<Vec<_>>(), d),
                coverage,
                root_probabilities: if roots.is_empty() { Vec::new() } else { average(&roots, design.thresholds.len()) },
            }
        })
        .collect();
    Ok(StudyReport { thresholds: design.thresholds.clone(), records, cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_design(seed: u64) -> StudyDesign {
        let truth = ParameterVector::new(30.0, 0.2, vec![], vec![], vec![]).unwrap();
        let cell = StudyCell {
            label: "iid".into(),
            truth,
            n: 80,
            priors: PriorSpec::with_normal_variance(3.0, 0.1, 10.0),
            unit_root: false,
        };
        let mut d = StudyDesign::new(vec![cell], seed);
        d.replicates = 3;
        d.sampler = SamplerConfig { n_chains: 2, n_iterations: 200, seed, ..SamplerConfig::default() };
        d
    }

    #[test]
    fn study_is_reproducible_and_aggregates() {
        let a = mc_experiment(&small_design(4)).unwrap();
        let b = mc_experiment(&small_design(4)).unwrap();
        assert_eq!(a, b);
        let cell = &a.cells[0];
        assert_eq!(cell.attempted, 3);
        assert!(cell.succeeded);
        assert_eq!(cell.mean.len(), 2);
        assert!(cell.coverage.iter().all(|c| (0.0..=1.0).contains(c)));
        let manual = a.records.iter().map(|r| r.means[1]).sum::<f64>() / 3.0;
        assert!((cell.mean[1] - manual).abs() < 1e-12);
        assert!((cell.mean[1] - 0.2).abs() < 0.3);
    }

    #[test]
    fn invalid_designs_rejected() {
        let mut d = small_design(1);
        d.replicates = 0;
        assert!(mc_experiment(&d).is_err());
        let mut d = small_design(1);
        d.cells.clear();
        assert!(mc_experiment(&d).is_err());
    }
}

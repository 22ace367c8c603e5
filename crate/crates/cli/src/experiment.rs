//! Experiment orchestration: cells, per-run jobs, summaries, and file output.
//!
//! Layout under the output directory: `summary.json` plus one
//! `cells/<k>_<alpha>_<beta>_<sigma>/run<i>.csv` per run (cell names gain an
//! algorithm prefix when a command sweeps algorithms). Per-run seeds derive
//! as `base_seed + run_index`; everything except wall-time fields is
//! byte-reproducible from the seed.

use std::fs;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use seminmf::cluster::LabelVector;
use seminmf::data::{
    add_gaussian_noise, load_csv, subsample, synthetic_exact, LabelColumn, LabeledDataset,
    NoiseSpec,
};
use seminmf::solver::{run, Algorithm, SolverConfig, SolverResult};
use seminmf::{Error, Mat, Result};

/// How noise seeds relate to run indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// Fresh noise per run (seed = run seed).
    PerRun,
    /// One noise field shared by all runs (seed = base seed).
    Fixed,
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-run" => Ok(NoiseMode::PerRun),
            "fixed" => Ok(NoiseMode::Fixed),
            other => Err(Error::InvalidParameter(format!(
                "unknown noise mode {other:?}; expected per-run|fixed"
            ))),
        }
    }
}

/// Data source for an experiment.
pub enum Source {
    Dataset(LabeledDataset<f64>),
    Synthetic { m: usize, n: usize, k: usize },
}

impl Source {
    pub fn describe(&self) -> String {
        match self {
            Source::Dataset(ds) => ds.name.clone(),
            Source::Synthetic { m, n, k } => format!("synthetic:{m}x{n}:rank{k}"),
        }
    }
}

/// Fully resolved experiment plan shared by every subcommand.
pub struct Plan {
    pub source: Source,
    pub algorithms: Vec<Algorithm>,
    pub ks: Vec<usize>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub runs: usize,
    pub fraction: f64,
    pub max_iters: usize,
    pub p: usize,
    pub base_seed: u64,
    pub early_stop_tol: Option<f64>,
    pub noise_mode: NoiseMode,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct CellKey {
    pub algorithm: &'static str,
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmi: Option<f64>,
    pub final_objective: f64,
    pub final_rel_error: f64,
    pub final_kkt: f64,
    pub iterations: usize,
    pub monotone: bool,
    pub monotonicity_violations: usize,
    pub ridge_events: usize,
    pub graph_edges: usize,
    pub wall_time_ms: f64,
    pub step_time_ms: f64,
}

#[derive(Debug, Serialize)]
pub struct CellSummary {
    #[serde(flatten)]
    pub key: CellKey,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_sd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmi_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmi_sd: Option<f64>,
    pub rel_error_mean: f64,
    pub rel_error_sd: f64,
    pub monotone_all: bool,
    pub wall_time_ms: f64,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub command: String,
    pub dataset: String,
    pub algorithms: Vec<String>,
    pub runs_per_cell: usize,
    pub fraction: f64,
    pub max_iters: usize,
    pub p: usize,
    pub base_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub early_stop_tol: Option<f64>,
    pub cells: Vec<CellSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best: Option<CellKey>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceReport>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConvergenceReport {
    /// First iteration whose objective is within 1% of the final value.
    pub threshold_iteration: usize,
    pub threshold_fraction: f64,
    pub final_objective: f64,
}

/// Sample statistics with the (n-1) standard-deviation convention.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

struct Job {
    key: CellKey,
    cell_index: usize,
    run_index: usize,
    seed: u64,
}

struct JobOutcome {
    cell_index: usize,
    run_index: usize,
    record: RunRecord,
    result: SolverResult<f64>,
}

impl Plan {
    fn cell_keys(&self) -> Vec<CellKey> {
        let mut keys = Vec::new();
        for &algorithm in &self.algorithms {
            for &k in &self.ks {
                for &alpha in &self.alphas {
                    for &beta in &self.betas {
                        for &sigma in &self.sigmas {
                            keys.push(CellKey {
                                algorithm: algorithm.name(),
                                k,
                                alpha,
                                beta,
                                sigma,
                            });
                        }
                    }
                }
            }
        }
        keys
    }

    /// Materializes the matrix and labels for one run of one cell.
    pub fn run_input(&self, key: &CellKey, seed: u64) -> Result<(Mat, Option<LabelVector>)> {
        let noise_seed = match self.noise_mode {
            NoiseMode::PerRun => seed,
            NoiseMode::Fixed => self.base_seed,
        };
        match &self.source {
            Source::Dataset(ds) => {
                let working = if self.fraction < 1.0 {
                    subsample(ds, self.fraction, seed)?
                } else {
                    ds.clone()
                };
                let x = if key.sigma > 0.0 {
                    add_gaussian_noise(
                        &working.x,
                        &NoiseSpec { sigma: key.sigma, seed: noise_seed },
                    )
                } else {
                    working.x.clone()
                };
                Ok((x, Some(working.labels.clone())))
            }
            Source::Synthetic { m, n, k } => {
                let instance = synthetic_exact::<f64>(*m, *n, *k, self.base_seed)?;
                let x = if key.sigma > 0.0 {
                    add_gaussian_noise(
                        &instance.x,
                        &NoiseSpec { sigma: key.sigma, seed: noise_seed },
                    )
                } else {
                    instance.x
                };
                Ok((x, None))
            }
        }
    }

    pub fn solver_config(&self, key: &CellKey, seed: u64) -> Result<SolverConfig<f64>> {
        let algorithm: Algorithm = key.algorithm.parse()?;
        Ok(SolverConfig::new(algorithm, key.k)
            .with_alpha(key.alpha)
            .with_beta(key.beta)
            .with_p(self.p)
            .with_max_iters(self.max_iters)
            .with_seed(seed)
            .with_early_stop_tol(self.early_stop_tol))
    }

    /// Runs every (cell, run) job, writes per-run histories, and returns the
    /// per-cell summaries in cell order.
    pub fn execute(&self, algo_prefix_in_cell_names: bool) -> Result<Vec<CellSummary>> {
        let keys = self.cell_keys();
        let mut jobs = Vec::new();
        for (cell_index, key) in keys.iter().enumerate() {
            for run_index in 0..self.runs {
                jobs.push(Job {
                    key: *key,
                    cell_index,
                    run_index,
                    seed: self.base_seed + run_index as u64,
                });
            }
        }

        let outcomes: Vec<Result<JobOutcome>> = jobs
            .par_iter()
            .map(|job| {
                let (x, labels) = self.run_input(&job.key, job.seed)?;
                let cfg = self.solver_config(&job.key, job.seed)?;
                let result = run(&x, &cfg, labels.as_ref())?;
                let record = RunRecord {
                    run: job.run_index,
                    seed: job.seed,
                    acc: result.metrics.map(|m| m.acc),
                    nmi: result.metrics.map(|m| m.nmi),
                    final_objective: *result.objective_history.last().expect("t=0 recorded"),
                    final_rel_error: *result
                        .relative_error_history
                        .last()
                        .expect("t=0 recorded"),
                    final_kkt: *result.kkt_history.last().expect("t=0 recorded"),
                    iterations: result.iterations,
                    monotone: result.monotone,
                    monotonicity_violations: result.monotonicity_violations,
                    ridge_events: result.ridge_events,
                    graph_edges: result.graph_edges,
                    wall_time_ms: result.wall_time_ms,
                    step_time_ms: result.step_time_ms,
                };
                Ok(JobOutcome {
                    cell_index: job.cell_index,
                    run_index: job.run_index,
                    record,
                    result,
                })
            })
            .collect();

        let mut collected: Vec<JobOutcome> = Vec::with_capacity(outcomes.len());
        for outcome in outcomes {
            collected.push(outcome?);
        }
        collected.sort_by_key(|o| (o.cell_index, o.run_index));

        let cells_dir = self.out_dir.join("cells");
        fs::create_dir_all(&cells_dir)?;

        let mut summaries = Vec::with_capacity(keys.len());
        for (cell_index, key) in keys.iter().enumerate() {
            let cell_outcomes: Vec<&JobOutcome> = collected
                .iter()
                .filter(|o| o.cell_index == cell_index)
                .collect();
            let cell_dir = cells_dir.join(cell_dir_name(key, algo_prefix_in_cell_names));
            fs::create_dir_all(&cell_dir)?;
            for outcome in &cell_outcomes {
                write_history_csv(
                    &cell_dir.join(format!("run{}.csv", outcome.run_index)),
                    &outcome.result,
                )?;
            }
            summaries.push(summarize_cell(*key, &cell_outcomes));
        }
        Ok(summaries)
    }
}

fn summarize_cell(key: CellKey, outcomes: &[&JobOutcome]) -> CellSummary {
    let accs: Vec<f64> = outcomes.iter().filter_map(|o| o.record.acc).collect();
    let nmis: Vec<f64> = outcomes.iter().filter_map(|o| o.record.nmi).collect();
    let rels: Vec<f64> = outcomes.iter().map(|o| o.record.final_rel_error).collect();
    let (rel_mean, rel_sd) = mean_sd(&rels);
    let (acc_stats, nmi_stats) = (
        (!accs.is_empty()).then(|| mean_sd(&accs)),
        (!nmis.is_empty()).then(|| mean_sd(&nmis)),
    );
    CellSummary {
        key,
        acc_mean: acc_stats.map(|s| s.0),
        acc_sd: acc_stats.map(|s| s.1),
        nmi_mean: nmi_stats.map(|s| s.0),
        nmi_sd: nmi_stats.map(|s| s.1),
        rel_error_mean: rel_mean,
        rel_error_sd: rel_sd,
        monotone_all: outcomes.iter().all(|o| o.record.monotone),
        wall_time_ms: outcomes.iter().map(|o| o.record.wall_time_ms).sum(),
        runs: outcomes.iter().map(|o| o.record.clone()).collect(),
    }
}

pub fn cell_dir_name(key: &CellKey, with_algo: bool) -> String {
    if with_algo {
        format!("{}_{}_{}_{}_{}", key.algorithm, key.k, key.alpha, key.beta, key.sigma)
    } else {
        format!("{}_{}_{}_{}", key.k, key.alpha, key.beta, key.sigma)
    }
}

/// Cell summary for the single-run commands (factorize, converge).
pub fn single_run_cell(key: CellKey, result: &SolverResult<f64>) -> CellSummary {
    let record = RunRecord {
        run: 0,
        seed: 0,
        acc: result.metrics.map(|m| m.acc),
        nmi: result.metrics.map(|m| m.nmi),
        final_objective: *result.objective_history.last().expect("t=0 recorded"),
        final_rel_error: *result.relative_error_history.last().expect("t=0 recorded"),
        final_kkt: *result.kkt_history.last().expect("t=0 recorded"),
        iterations: result.iterations,
        monotone: result.monotone,
        monotonicity_violations: result.monotonicity_violations,
        ridge_events: result.ridge_events,
        graph_edges: result.graph_edges,
        wall_time_ms: result.wall_time_ms,
        step_time_ms: result.step_time_ms,
    };
    CellSummary {
        key,
        acc_mean: record.acc,
        acc_sd: record.acc.map(|_| 0.0),
        nmi_mean: record.nmi,
        nmi_sd: record.nmi.map(|_| 0.0),
        rel_error_mean: record.final_rel_error,
        rel_error_sd: 0.0,
        monotone_all: record.monotone,
        wall_time_ms: record.wall_time_ms,
        runs: vec![record],
    }
}

/// One row per recorded iteration, full round-trip float precision.
pub fn write_history_csv(path: &Path, result: &SolverResult<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,objective,proxy,kkt,rel_error,elapsed_ms")?;
    for t in 0..result.objective_history.len() {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            t,
            result.objective_history[t],
            result.proxy_history[t],
            result.kkt_history[t],
            result.relative_error_history[t],
            result.elapsed_ms_history[t],
        )?;
    }
    Ok(())
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let json = serde_json::to_string_pretty(summary)
        .map_err(|e| Error::Data(format!("summary serialization: {e}")))?;
    fs::write(path, json)?;
    Ok(())
}

/// First iteration whose objective is within `fraction` of the final value.
pub fn convergence_report(result: &SolverResult<f64>, fraction: f64) -> ConvergenceReport {
    let finals = *result.objective_history.last().expect("t=0 recorded");
    let cutoff = finals * (1.0 + fraction);
    let threshold_iteration = result
        .objective_history
        .iter()
        .position(|&j| j <= cutoff)
        .unwrap_or(result.objective_history.len() - 1);
    ConvergenceReport {
        threshold_iteration,
        threshold_fraction: fraction,
        final_objective: finals,
    }
}

/// Loads the data source named on the command line.
pub fn load_source(
    data: Option<&Path>,
    synthetic: Option<&str>,
    label_column: &str,
    delimiter: char,
) -> Result<Source> {
    match (data, synthetic) {
        (Some(path), None) => {
            let label_column = match label_column {
                "last" => LabelColumn::Last,
                other => LabelColumn::Index(other.parse().map_err(|_| {
                    Error::InvalidParameter(format!(
                        "label column must be 'last' or an index, got {other:?}"
                    ))
                })?),
            };
            let ds = load_csv::<f64>(path, label_column, delimiter as u8)?;
            Ok(Source::Dataset(ds))
        }
        (None, Some(spec)) => {
            let parts: Vec<&str> = spec.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::InvalidParameter(format!(
                    "--synthetic expects m,n,k; got {spec:?}"
                )));
            }
            let parse = |s: &str| -> Result<usize> {
                s.trim()
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad synthetic dimension {s:?}")))
            };
            Ok(Source::Synthetic {
                m: parse(parts[0])?,
                n: parse(parts[1])?,
                k: parse(parts[2])?,
            })
        }
        (Some(_), Some(_)) => Err(Error::InvalidParameter(
            "--data and --synthetic are mutually exclusive".into(),
        )),
        (None, None) => Err(Error::InvalidParameter(
            "one of --data or --synthetic is required".into(),
        )),
    }
}

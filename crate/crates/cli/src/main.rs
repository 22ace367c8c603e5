//! Experiment runner for the semi-NMF solver family.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical abort.

mod experiment;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use experiment::{
    convergence_report, load_source, write_history_csv, write_summary, Plan, Source, Summary,
};
use seminmf::data::write_matrix_csv;
use seminmf::solver::{run, Algorithm};
use seminmf::{Error, Result};

#[derive(Parser)]
#[command(
    name = "seminmf",
    about = "Matrix factorization experiments: NMF, semi-NMF, graph-regularized and L2,1-robust variants",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Factorize one dataset at a single (k, alpha, beta) cell and write the
    /// iteration history plus the factor matrices.
    Factorize(JobArgs),
    /// Sweep an (alpha, beta) grid with repeated subsampled runs and report
    /// clustering quality per cell.
    GridSearch(JobArgs),
    /// Evaluate every requested algorithm across noise levels on identical
    /// noisy instances.
    NoiseSweep(JobArgs),
    /// Single run focused on convergence: reports the iteration where the
    /// objective first comes within 1% of its final value.
    Converge(JobArgs),
    /// Exact-recovery study on a synthetic low-rank instance across seeds
    /// and noise levels.
    Synthetic(JobArgs),
}

#[derive(Args, Clone)]
struct JobArgs {
    /// Algorithm(s): nmf|snf|grsnf|l21snf (comma-separated where the command
    /// supports several).
    #[arg(long, value_delimiter = ',', default_value = "l21snf")]
    algo: Vec<String>,

    /// Row-per-instance CSV with a label column.
    #[arg(long)]
    data: Option<PathBuf>,

    /// Exact low-rank instance "m,n,k" instead of a dataset file.
    #[arg(long)]
    synthetic: Option<String>,

    /// Factorization rank(s) / cluster counts.
    #[arg(long, value_delimiter = ',', default_value = "5")]
    k: Vec<usize>,

    /// Graph-penalty weight(s).
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,

    /// Basis-sparsity weight(s).
    #[arg(long, value_delimiter = ',')]
    beta: Vec<f64>,

    /// Gaussian noise level(s).
    #[arg(long, value_delimiter = ',', default_value = "0")]
    sigma: Vec<f64>,

    /// Runs per cell.
    #[arg(long, default_value_t = 20)]
    runs: usize,

    /// Subsample fraction per run (datasets only).
    #[arg(long, default_value_t = 0.9)]
    fraction: f64,

    /// Iterations per run.
    #[arg(long, default_value_t = 500)]
    iters: usize,

    /// Neighbor count for the sample graph.
    #[arg(long, default_value_t = 5)]
    p: usize,

    /// Base seed; run i uses seed + i.
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Output directory.
    #[arg(long)]
    out: PathBuf,

    /// Stop early when the relative objective change drops below this.
    #[arg(long = "early-stop-tol")]
    early_stop_tol: Option<f64>,

    /// Label column of the CSV: "last" or a zero-based index.
    #[arg(long = "label-column", default_value = "last")]
    label_column: String,

    /// CSV field delimiter.
    #[arg(long, default_value_t = ',')]
    delimiter: char,

    /// Noise seeding: per-run (resampled each run) or fixed.
    #[arg(long = "noise-mode", default_value = "per-run")]
    noise_mode: String,
}

fn main() -> ExitCode {
    configure_threads();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap prints help/version through the error path as well
            let _ = err.print();
            return if err.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match &cli.command {
        Command::Factorize(args) => cmd_factorize(args),
        Command::GridSearch(args) => cmd_grid_search(args),
        Command::NoiseSweep(args) => cmd_noise_sweep(args),
        Command::Converge(args) => cmd_converge(args),
        Command::Synthetic(args) => cmd_synthetic(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// SEMINMF_THREADS caps the number of parallel (cell, run) jobs.
fn configure_threads() {
    if let Ok(value) = std::env::var("SEMINMF_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
            }
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidParameter(_) => 1,
        Error::NonFinite { .. } => 3,
        _ => 2,
    }
}

fn parse_algorithms(args: &JobArgs) -> Result<Vec<Algorithm>> {
    args.algo.iter().map(|name| name.parse::<Algorithm>()).collect()
}

fn single<T: Copy>(values: &[T], what: &str) -> Result<T> {
    match values {
        [only] => Ok(*only),
        _ => Err(Error::InvalidParameter(format!(
            "this command takes exactly one {what}, got {}",
            values.len()
        ))),
    }
}

fn build_plan(args: &JobArgs, algorithms: Vec<Algorithm>, runs: usize) -> Result<Plan> {
    if runs < 1 {
        return Err(Error::InvalidParameter("runs must be at least 1".into()));
    }
    if args.k.is_empty() || args.sigma.is_empty() {
        return Err(Error::InvalidParameter("k and sigma lists must be nonempty".into()));
    }
    if args.sigma.iter().any(|&s| s < 0.0) {
        return Err(Error::InvalidParameter("sigma must be nonnegative".into()));
    }
    let source = load_source(
        args.data.as_deref(),
        args.synthetic.as_deref(),
        &args.label_column,
        args.delimiter,
    )?;
    let alphas = if args.alpha.is_empty() { vec![0.0] } else { args.alpha.clone() };
    let betas = if args.beta.is_empty() { vec![0.0] } else { args.beta.clone() };
    Ok(Plan {
        source,
        algorithms,
        ks: args.k.clone(),
        alphas,
        betas,
        sigmas: args.sigma.clone(),
        runs,
        fraction: args.fraction,
        max_iters: args.iters,
        p: args.p,
        base_seed: args.seed,
        early_stop_tol: args.early_stop_tol,
        noise_mode: args.noise_mode.parse()?,
        out_dir: args.out.clone(),
    })
}

fn summary_scaffold(command: &str, plan: &Plan) -> Summary {
    Summary {
        command: command.into(),
        dataset: plan.source.describe(),
        algorithms: plan.algorithms.iter().map(|a| a.name().to_string()).collect(),
        runs_per_cell: plan.runs,
        fraction: plan.fraction,
        max_iters: plan.max_iters,
        p: plan.p,
        base_seed: plan.base_seed,
        early_stop_tol: plan.early_stop_tol,
        cells: Vec::new(),
        best: None,
        convergence: None,
    }
}

/// Single-cell single-run factorization; writes history, factors, summary.
fn cmd_factorize(args: &JobArgs) -> Result<()> {
    let algorithm = single(&parse_algorithms(args)?, "algorithm")?;
    let mut plan = build_plan(args, vec![algorithm], 1)?;
    plan.fraction = 1.0; // factorize works on the full data
    single(&plan.ks, "k")?;
    single(&plan.alphas, "alpha")?;
    single(&plan.betas, "beta")?;
    single(&plan.sigmas, "sigma")?;

    let key = experiment::CellKey {
        algorithm: algorithm.name(),
        k: plan.ks[0],
        alpha: plan.alphas[0],
        beta: plan.betas[0],
        sigma: plan.sigmas[0],
    };
    let (x, labels) = plan.run_input(&key, plan.base_seed)?;
    let cfg = plan.solver_config(&key, plan.base_seed)?;
    let result = run(&x, &cfg, labels.as_ref())?;

    std::fs::create_dir_all(&plan.out_dir)?;
    write_history_csv(&plan.out_dir.join("history.csv"), &result)?;
    write_matrix_csv(&plan.out_dir.join("u.csv"), &result.factors.u)?;
    write_matrix_csv(&plan.out_dir.join("v.csv"), &result.factors.v)?;

    let mut summary = summary_scaffold("factorize", &plan);
    summary.cells = vec![experiment::single_run_cell(key, &result)];
    write_summary(&plan.out_dir.join("summary.json"), &summary)?;
    println!(
        "factorize: {} iterations, final objective {}, monotone {}",
        result.iterations,
        result.objective_history.last().expect("t=0 recorded"),
        result.monotone
    );
    Ok(())
}

/// Per-(alpha, beta) clustering quality over repeated subsampled runs.
fn cmd_grid_search(args: &JobArgs) -> Result<()> {
    let algorithm = single(&parse_algorithms(args)?, "algorithm")?;
    let mut effective = args.clone();
    if effective.alpha.is_empty() {
        effective.alpha = vec![1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0];
    }
    if effective.beta.is_empty() {
        effective.beta = vec![1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0];
    }
    let plan = build_plan(&effective, vec![algorithm], effective.runs)?;
    if !matches!(plan.source, Source::Dataset(_)) {
        return Err(Error::InvalidParameter("grid-search needs labeled data (--data)".into()));
    }
    std::fs::create_dir_all(&plan.out_dir)?;
    let cells = plan.execute(false)?;

    let best = cells
        .iter()
        .max_by(|a, b| {
            let acc = a.acc_mean.partial_cmp(&b.acc_mean).expect("finite means");
            acc.then(a.nmi_mean.partial_cmp(&b.nmi_mean).expect("finite means"))
        })
        .map(|c| c.key);

    let mut grid_csv = String::from("k,alpha,beta,sigma,acc_mean,acc_sd,nmi_mean,nmi_sd\n");
    for cell in &cells {
        grid_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            cell.key.k,
            cell.key.alpha,
            cell.key.beta,
            cell.key.sigma,
            cell.acc_mean.unwrap_or(f64::NAN),
            cell.acc_sd.unwrap_or(f64::NAN),
            cell.nmi_mean.unwrap_or(f64::NAN),
            cell.nmi_sd.unwrap_or(f64::NAN),
        ));
    }
    std::fs::write(plan.out_dir.join("grid.csv"), grid_csv)?;

    let mut summary = summary_scaffold("grid-search", &plan);
    summary.cells = cells;
    summary.best = best;
    write_summary(&plan.out_dir.join("summary.json"), &summary)?;
    if let Some(best) = best {
        println!(
            "grid-search: best cell k={} alpha={} beta={} sigma={}",
            best.k, best.alpha, best.beta, best.sigma
        );
    }
    Ok(())
}

/// Mean ACC/NMI per algorithm per noise level, on shared noisy instances.
fn cmd_noise_sweep(args: &JobArgs) -> Result<()> {
    let algorithms = parse_algorithms(args)?;
    let plan = build_plan(args, algorithms, args.runs)?;
    if !matches!(plan.source, Source::Dataset(_)) {
        return Err(Error::InvalidParameter("noise-sweep needs labeled data (--data)".into()));
    }
    single(&plan.alphas, "alpha")?;
    single(&plan.betas, "beta")?;
    std::fs::create_dir_all(&plan.out_dir)?;
    let cells = plan.execute(true)?;

    let mut sweep_csv = String::from("algorithm,k,sigma,acc_mean,acc_sd,nmi_mean,nmi_sd\n");
    for cell in &cells {
        sweep_csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            cell.key.algorithm,
            cell.key.k,
            cell.key.sigma,
            cell.acc_mean.unwrap_or(f64::NAN),
            cell.acc_sd.unwrap_or(f64::NAN),
            cell.nmi_mean.unwrap_or(f64::NAN),
            cell.nmi_sd.unwrap_or(f64::NAN),
        ));
    }
    std::fs::write(plan.out_dir.join("sweep.csv"), sweep_csv)?;

    let mut summary = summary_scaffold("noise-sweep", &plan);
    summary.cells = cells;
    write_summary(&plan.out_dir.join("summary.json"), &summary)?;
    println!("noise-sweep: {} cells written", summary.cells.len());
    Ok(())
}

/// Single run with the convergence threshold report.
fn cmd_converge(args: &JobArgs) -> Result<()> {
    let algorithm = single(&parse_algorithms(args)?, "algorithm")?;
    let mut plan = build_plan(args, vec![algorithm], 1)?;
    plan.fraction = 1.0;
    single(&plan.ks, "k")?;
    single(&plan.alphas, "alpha")?;
    single(&plan.betas, "beta")?;
    single(&plan.sigmas, "sigma")?;

    let key = experiment::CellKey {
        algorithm: algorithm.name(),
        k: plan.ks[0],
        alpha: plan.alphas[0],
        beta: plan.betas[0],
        sigma: plan.sigmas[0],
    };
    let (x, labels) = plan.run_input(&key, plan.base_seed)?;
    let cfg = plan.solver_config(&key, plan.base_seed)?;
    let result = run(&x, &cfg, labels.as_ref())?;
    let report = convergence_report(&result, 0.01);

    std::fs::create_dir_all(&plan.out_dir)?;
    write_history_csv(&plan.out_dir.join("history.csv"), &result)?;
    let mut summary = summary_scaffold("converge", &plan);
    summary.cells = vec![experiment::single_run_cell(key, &result)];
    summary.convergence = Some(report);
    write_summary(&plan.out_dir.join("summary.json"), &summary)?;
    println!(
        "converge: objective within 1% of its final value after {} iterations",
        report.threshold_iteration
    );
    Ok(())
}

/// Exact-recovery study: relative-error histories per seed and noise level.
fn cmd_synthetic(args: &JobArgs) -> Result<()> {
    let mut effective = args.clone();
    if effective.algo.len() == 1 && effective.algo[0] == "l21snf" {
        // default comparison pair for the recovery study
        effective.algo = vec!["l21snf".into(), "snf".into()];
    }
    let algorithms = parse_algorithms(&effective)?;
    if effective.synthetic.is_none() {
        return Err(Error::InvalidParameter("synthetic needs --synthetic m,n,k".into()));
    }
    let mut plan = build_plan(&effective, algorithms, effective.runs)?;
    // factorization rank follows the instance rank
    if let Source::Synthetic { k, .. } = plan.source {
        plan.ks = vec![k];
    }
    single(&plan.alphas, "alpha")?;
    single(&plan.betas, "beta")?;
    std::fs::create_dir_all(&plan.out_dir)?;
    let cells = plan.execute(true)?;
    let mut summary = summary_scaffold("synthetic", &plan);
    summary.cells = cells;
    write_summary(&plan.out_dir.join("summary.json"), &summary)?;
    for cell in &summary.cells {
        println!(
            "synthetic {} sigma={}: mean final relative error {}",
            cell.key.algorithm, cell.key.sigma, cell.rel_error_mean
        );
    }
    Ok(())
}

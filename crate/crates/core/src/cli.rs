//! Command-line entry point.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::classifier::{accuracy, auc};
use crate::completion::{fit, CompletionConfig};
use crate::error::{Error, Result};
use crate::harness::{
    init_mask, observed_column_stats, reconstruction_errors, run_experiment, standardize_columns, Strategy,
    SyntheticSpec,
};
use crate::io::{format_number, load_dataset, write_matrix, write_outcome, DatasetSpec, ExperimentConfig, LabelColumn};
use crate::matrix::{Entry, PartialMatrix};
use crate::poss::{exhaustive_optimum, poss_run, BiObjectiveProblem, Candidate};
use crate::theory::{calibration_trial, lemma3_sweep};

#[derive(Debug, Parser)]
#[command(name = "featacq", version, about = "Supervised matrix completion with active feature acquisition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Complete a dataset from a random subset of its feature cells.
    Complete(CompleteArgs),
    /// Run an acquisition experiment and write per-round records.
    Simulate(SimulateArgs),
    /// Compare POSS against exhaustive search on small random pools.
    BenchPoss(BenchPossArgs),
    /// Evaluate the reconstruction-error bound on a synthetic instance.
    Bound(BoundArgs),
    /// Monte-Carlo sweep of the Hadamard-product trace-norm inequality.
    Lemma3(Lemma3Args),
}

#[derive(Debug, Args)]
struct CompleteArgs {
    #[arg(long)]
    data: PathBuf,
    /// `last`, a 0-based index, or a header name.
    #[arg(long, default_value = "last")]
    label_col: LabelColumn,
    #[arg(long, default_value = "1")]
    positive_label: String,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    #[arg(long)]
    header: bool,
    #[arg(long)]
    no_standardize: bool,
    /// Fraction of feature cells revealed.
    #[arg(long, default_value_t = 0.6)]
    observed: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct BenchPossArgs {
    #[arg(long, default_value_t = 10)]
    pool: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Budget as a fraction of the pool's total cost.
    #[arg(long, default_value_t = 0.5)]
    budget_fraction: f64,
    /// Defaults to the problem's own iteration budget.
    #[arg(long)]
    iterations: Option<usize>,
    /// Agreement table path; printed when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[arg(long, default_value_t = 100)]
    rows: usize,
    #[arg(long, default_value_t = 100)]
    cols: usize,
    #[arg(long, default_value_t = 5)]
    rank: usize,
    #[arg(long, default_value_t = 0.6)]
    observed: f64,
    #[arg(long, default_value_t = 1.0)]
    c0: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct Lemma3Args {
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 20)]
    max_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown strategy {s:?}; expected variance, cost_ratio, poss or random"))
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Complete(a) => complete(a),
        Command::Simulate(a) => simulate(a),
        Command::BenchPoss(a) => bench_poss(a),
        Command::Bound(a) => bound(a),
        Command::Lemma3(a) => lemma3(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("featacq: error: {e}");
            1
        }
    }
}

#[derive(Serialize)]
struct CompleteMetrics {
    rows: usize,
    cols: usize,
    observed_cells: usize,
    recon_rel: f64,
    recon_msq: f64,
    objective: f64,
    outer_rounds: usize,
    inner_iterations: usize,
    converged: bool,
    train_accuracy: f64,
    train_auc: f64,
}

fn complete(a: CompleteArgs) -> Result<()> {
    let spec = DatasetSpec {
        path: a.data,
        label_column: a.label_col,
        positive_label: a.positive_label,
        delimiter: ascii_delimiter(a.delimiter)?,
        has_header: a.header,
        standardize: !a.no_standardize,
    };
    let ds = load_dataset(&spec)?;
    let cfg = CompletionConfig {
        lambda1: a.lambda1,
        lambda2: a.lambda2,
        ..CompletionConfig::default()
    };
    let mask = init_mask(ds.features.shape(), a.observed, a.seed)?;
    let raw = PartialMatrix::new(ds.features.clone(), mask.clone())?;
    let (means, scales) = if spec.standardize {
        observed_column_stats(&raw)
    } else {
        (vec![0.0; ds.features.ncols()], vec![1.0; ds.features.ncols()])
    };
    let mut scaled = ds.features.clone();
    standardize_columns(&mut scaled, &means, &scales);
    let obs = PartialMatrix::new(scaled, mask)?;
    let result = fit(&obs, &ds.labels, &cfg, None)?;

    let mut recovered = result.x_hat.clone();
    for (j, mut col) in recovered.column_iter_mut().enumerate() {
        col.apply(|v| *v = *v * scales[j] + means[j]);
    }
    let (recon_rel, recon_msq) = reconstruction_errors(&recovered, &ds.features)?;
    let scores = result.model.decision_values(&result.x_hat)?;
    let metrics = CompleteMetrics {
        rows: ds.features.nrows(),
        cols: ds.features.ncols(),
        observed_cells: obs.observed_count(),
        recon_rel,
        recon_msq,
        objective: result.final_objective(),
        outer_rounds: result.objective_trace.len(),
        inner_iterations: result.inner_iterations,
        converged: result.converged,
        train_accuracy: accuracy(result.model.predict(&result.x_hat)?.as_slice(), ds.labels.as_slice())?,
        train_auc: auc(scores.as_slice(), ds.labels.as_slice())?,
    };

    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    write_matrix(&a.out.join("recovered.csv"), &recovered, b',')?;
    let json = serde_json::to_string_pretty(&metrics).map_err(|e| Error::Config(e.to_string()))?;
    write_file(&a.out.join("metrics.json"), &(json + "\n"))?;
    println!(
        "recon_rel {} recon_msq {} train_accuracy {}",
        format_number(recon_rel),
        format_number(recon_msq),
        format_number(metrics.train_accuracy)
    );
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let plan = &mut cfg.plan;
    if let Some(s) = a.strategy {
        plan.strategy = s;
    }
    if let Some(b) = a.batch {
        plan.batch_size = b;
        plan.batch_fraction = None;
    }
    if a.budget.is_some() {
        plan.budget_per_round = a.budget;
    }
    if let Some(r) = a.rounds {
        plan.rounds = r;
    }
    if let Some(w) = a.window {
        plan.window = w;
    }
    if let Some(r) = a.replicates {
        plan.replicates = r;
    }
    if let Some(s) = a.seed {
        plan.seed = s;
    }
    cfg.validate()?;
    let source = cfg.data_source()?;
    let outcome = run_experiment(&cfg.plan, &source)?;
    let written = write_outcome(&a.out, &outcome)?;
    cfg.save(&a.out.join("config.json"))?;
    if let Some(last) = outcome.mean.last() {
        println!(
            "{} files in {}; final round {}: cost {} accuracy {} recon_rel {}",
            written.len(),
            a.out.display(),
            last.round,
            format_number(last.cumulative_cost),
            format_number(last.test_accuracy),
            format_number(last.reconstruction_error_relative)
        );
    }
    Ok(())
}

fn bench_poss(a: BenchPossArgs) -> Result<()> {
    if a.trials == 0 {
        return Err(Error::Argument("trials must be >= 1".into()));
    }
    if !(a.budget_fraction > 0.0 && a.budget_fraction <= 1.0) {
        return Err(Error::Argument(format!("budget fraction {} not in (0, 1]", a.budget_fraction)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut table = String::from("trial,budget,poss_value,poss_cost,optimum,match\n");
    let mut matches = 0;
    for t in 0..a.trials {
        let candidates: Vec<Candidate> = (0..a.pool)
            .map(|k| Candidate {
                entry: Entry::new(k, 0),
                informativeness: rng.random_range(0.0..1.0),
                cost: rng.random_range(1..=10) as f64,
            })
            .collect();
        let total: f64 = candidates.iter().map(|c| c.cost).sum();
        let problem = BiObjectiveProblem::new(candidates, a.budget_fraction * total)?;
        let iterations = a.iterations.unwrap_or_else(|| problem.default_iterations());
        let flip = 1.0 / problem.len().max(1) as f64;
        let run = poss_run(&problem, iterations, flip, &mut rng)?;
        let (value, cost) = run.selected.iter().fold((0.0, 0.0), |acc, &k| {
            let c = &problem.candidates()[k];
            (acc.0 + c.informativeness, acc.1 + c.cost)
        });
        let optimum = exhaustive_optimum(&problem)?;
        let hit = (value - optimum).abs() <= 1e-9 * optimum.max(1.0);
        matches += usize::from(hit);
        table.push_str(&format!(
            "{t},{},{},{},{},{}\n",
            format_number(problem.budget()),
            format_number(value),
            format_number(cost),
            format_number(optimum),
            u8::from(hit)
        ));
    }
    let rate = matches as f64 / a.trials as f64;
    match &a.out {
        Some(p) => write_file(p, &table)?,
        None => print!("{table}"),
    }
    println!("agreement {} ({matches}/{})", format_number(rate), a.trials);
    Ok(())
}

fn bound(a: BoundArgs) -> Result<()> {
    let spec = SyntheticSpec {
        rows: a.rows,
        cols: a.cols,
        rank: a.rank,
    };
    let cfg = CompletionConfig {
        lambda1: a.lambda1,
        lambda2: a.lambda2,
        ..CompletionConfig::default()
    };
    let trial = calibration_trial(&spec, a.observed, &cfg, a.c0, a.seed)?;
    #[derive(Serialize)]
    struct Report {
        #[serde(flatten)]
        trial: crate::theory::CalibrationTrial,
        probability: String,
    }
    let report = Report {
        trial,
        probability: format!("1 - C/{}", a.rows + a.cols),
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?;
    println!("{json}");
    Ok(())
}

fn lemma3(a: Lemma3Args) -> Result<()> {
    let s = lemma3_sweep(a.trials, a.max_size, a.seed)?;
    println!(
        "held {}/{} worst lhs/rhs {}",
        s.held,
        s.trials,
        format_number(s.worst_ratio)
    );
    if s.held < s.trials {
        return Err(Error::Argument(format!(
            "inequality violated in {} of {} trials",
            s.trials - s.held,
            s.trials
        )));
    }
    Ok(())
}

fn ascii_delimiter(c: char) -> Result<u8> {
    u8::try_from(c)
        .ok()
        .filter(u8::is_ascii)
        .ok_or_else(|| Error::Argument(format!("delimiter {c:?} is not ASCII")))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

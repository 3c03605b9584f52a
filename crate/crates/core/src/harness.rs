//! Closed-loop acquisition experiments.
//!
//! Each replicate splits the data, hides part of the training matrix, and
//! then repeats: complete the matrix and train the classifier, score the
//! classifier on the fully observed test rows, pick a batch of missing
//! entries, and buy their true values from the oracle.

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{select_cost_ratio, select_top_k, CostModel, InformativenessTracker, Pick, ScoredEntry};
use crate::classifier::{accuracy, auc, check_labels, sign, LabeledSplit, SplitRole};
use crate::completion::{fit, CompletionConfig};
use crate::error::{Error, Result};
use crate::matrix::{Entry, PartialMatrix};
use crate::poss::{poss_optimize, BiObjectiveProblem, Candidate};

const SPLIT_RETRIES: usize = 100;

// Independent random streams inside one replicate.
const STREAM_DATA: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_MASK: u64 = 3;
const STREAM_COSTS: u64 = 4;
const STREAM_SELECT: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn replicate_seed(seed: u64, replicate: usize) -> u64 {
    seed.wrapping_add((replicate as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Count of cells for a fraction of `total`, rounded down. The small slack
/// keeps products like `0.7 * 100` from landing just below an integer.
fn fraction_count(fraction: f64, total: usize) -> usize {
    ((fraction * total as f64) + 1e-9).floor() as usize
}

/// Features with ±1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DMatrix<f64>,
    pub labels: DVector<f64>,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: DVector<f64>) -> Result<Self> {
        check_labels(&labels)?;
        if features.nrows() != labels.len() {
            return Err(Error::len(features.nrows(), labels.len()));
        }
        if features.nrows() == 0 {
            return Err(Error::Argument("dataset has no rows".into()));
        }
        Ok(Self { features, labels })
    }

    fn rows(&self, idx: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
        let x = DMatrix::from_fn(idx.len(), self.features.ncols(), |i, j| {
            self.features[(idx[i], j)]
        });
        let y = DVector::from_fn(idx.len(), |i, _| self.labels[idx[i]]);
        (x, y)
    }
}

/// Rank-`rank` features whose labels are exactly linear in them.
///
/// `X = A B^T / sqrt(rank)` with Gaussian `B` and latent rows `A`, where the
/// first latent coordinate is the ±1 label and the rest are Gaussian. The
/// weight vector `w* = sqrt(rank) B (B^T B)^{-1} e_1` then gives `X w* = y`
/// exactly, so `y = sign(X w*)` with a unit margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
}

impl SyntheticSpec {
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Dataset> {
        Ok(self.generate_with_weights(rng)?.0)
    }

    /// The dataset together with the labelling weights `w*`.
    pub fn generate_with_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Dataset, DVector<f64>)> {
        let r = self.rank;
        if r == 0 || r > self.rows.min(self.cols) {
            return Err(Error::Argument(format!(
                "synthetic rank {r} must lie in 1..={}",
                self.rows.min(self.cols)
            )));
        }
        let b = DMatrix::from_fn(self.cols, r, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut a = DMatrix::from_fn(self.rows, r, |_, _| rng.sample::<f64, _>(StandardNormal));
        for i in 0..self.rows {
            a[(i, 0)] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        }
        // Both classes, whatever the draw.
        if self.rows >= 2 {
            a[(0, 0)] = 1.0;
            a[(1, 0)] = -1.0;
        }
        let scale = (r as f64).sqrt();
        let x = &a * b.transpose() / scale;
        let gram = (b.transpose() * &b).cholesky().ok_or(Error::RankDeficient)?;
        let mut e1 = DVector::zeros(r);
        e1[0] = 1.0;
        let w = &b * gram.solve(&e1) * scale;
        let y = (&x * &w).map(sign);
        Ok((Dataset::new(x, y)?, w))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// A fresh draw per replicate.
    Synthetic(SyntheticSpec),
    /// A fixed dataset; `standardize` z-scores each column with statistics
    /// from the observed training entries.
    Fixed { dataset: Dataset, standardize: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Variance,
    CostRatio,
    Poss,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostScheme {
    /// Every column costs 1.
    Uniform,
    /// Per-column integer costs uniform on {1, ..., 10}.
    RandomInteger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentPlan {
    pub train_fraction: f64,
    pub initial_observed_rate: f64,
    pub strategy: Strategy,
    /// Entries per round for the variance, cost-ratio and random strategies.
    pub batch_size: usize,
    /// When set, overrides `batch_size` with this fraction of the initially
    /// missing training entries (at least 1).
    pub batch_fraction: Option<f64>,
    /// Cost budget per round for POSS; defaults to the batch size times the
    /// mean column cost.
    pub budget_per_round: Option<f64>,
    pub costs: CostScheme,
    pub rounds: usize,
    /// Snapshot window for informativeness, 0 = all rounds.
    pub window: usize,
    /// Missing entries handed to POSS, highest informativeness first.
    pub poss_pool: usize,
    /// POSS iterations per round; defaults to the problem's own budget.
    pub poss_iterations: Option<usize>,
    #[serde(flatten)]
    pub completion: CompletionConfig,
    pub seed: u64,
    pub replicates: usize,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            initial_observed_rate: 0.6,
            strategy: Strategy::Variance,
            batch_size: 10,
            batch_fraction: None,
            budget_per_round: None,
            costs: CostScheme::Uniform,
            rounds: 10,
            window: 0,
            poss_pool: 200,
            poss_iterations: None,
            completion: CompletionConfig::default(),
            seed: 0,
            replicates: 10,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::Config(what));
        let in_unit = |v: f64| v > 0.0 && v <= 1.0;
        if !in_unit(self.train_fraction) {
            return bad(format!("train_fraction {} not in (0, 1]", self.train_fraction));
        }
        if !in_unit(self.initial_observed_rate) {
            return bad(format!(
                "initial_observed_rate {} not in (0, 1]",
                self.initial_observed_rate
            ));
        }
        if self.rounds == 0 {
            return bad("rounds must be >= 1".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if let Some(f) = self.batch_fraction {
            if !in_unit(f) {
                return bad(format!("batch_fraction {f} not in (0, 1]"));
            }
        }
        if let Some(b) = self.budget_per_round {
            if !(b > 0.0 && b.is_finite()) {
                return bad(format!("budget_per_round {b} must be positive"));
            }
        }
        if self.poss_pool == 0 {
            return bad("poss_pool must be >= 1".into());
        }
        if self.poss_iterations == Some(0) {
            return bad("poss_iterations must be >= 1".into());
        }
        self.completion.validate()
    }
}

/// Holds the full training matrix and answers entry queries.
#[derive(Debug, Clone)]
pub struct Oracle {
    ground_truth: DMatrix<f64>,
    costs: CostModel,
}

impl Oracle {
    pub fn new(ground_truth: DMatrix<f64>, costs: CostModel) -> Result<Self> {
        if costs.n_cols() != ground_truth.ncols() {
            return Err(Error::len(ground_truth.ncols(), costs.n_cols()));
        }
        Ok(Self {
            ground_truth,
            costs,
        })
    }

    pub fn ground_truth(&self) -> &DMatrix<f64> {
        &self.ground_truth
    }

    pub fn costs(&self) -> &CostModel {
        &self.costs
    }

    /// True value and cost of an entry.
    pub fn query(&self, entry: Entry) -> Result<(f64, f64)> {
        let (n, d) = self.ground_truth.shape();
        if entry.row >= n || entry.col >= d {
            return Err(Error::Argument(format!(
                "query ({}, {}) outside {n}x{d}",
                entry.row, entry.col
            )));
        }
        Ok((self.ground_truth[(entry.row, entry.col)], self.costs.cost(entry.col)))
    }
}

/// Metrics after one round's completion, before that round's purchases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub cumulative_cost: f64,
    pub queried_entries: usize,
    pub reconstruction_error_relative: f64,
    pub reconstruction_error_mean_sq: f64,
    pub train_objective: f64,
    pub test_accuracy: f64,
    pub test_auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRun {
    pub records: Vec<RoundRecord>,
    /// Every purchased entry in purchase order.
    pub queries: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub replicates: Vec<ReplicateRun>,
    /// Per-round average over the replicates that reached that round.
    pub mean: Vec<RoundRecord>,
}

/// Seeded row partition with `floor(train_fraction * n)` training rows.
/// Non-empty sides must contain both classes; reshuffles up to 100 times.
pub fn make_split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(LabeledSplit, LabeledSplit)> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::Argument(format!(
            "train fraction {train_fraction} not in (0, 1]"
        )));
    }
    let n = dataset.labels.len();
    let n_train = fraction_count(train_fraction, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..SPLIT_RETRIES {
        order.shuffle(&mut rng);
        let (train_idx, test_idx) = order.split_at(n_train);
        let (xtr, ytr) = dataset.rows(train_idx);
        let (xte, yte) = dataset.rows(test_idx);
        let train = LabeledSplit::new(xtr, ytr, SplitRole::Train)?;
        let test = LabeledSplit::new(xte, yte, SplitRole::Test)?;
        let ok = |s: &LabeledSplit| s.is_empty() || s.has_both_classes();
        if ok(&train) && ok(&test) {
            return Ok((train, test));
        }
    }
    Err(Error::Stratification(SPLIT_RETRIES))
}

/// Exactly `floor(rate * n * d)` observed cells, uniform without replacement.
pub fn init_mask(shape: (usize, usize), observed_rate: f64, seed: u64) -> Result<DMatrix<bool>> {
    if !(observed_rate > 0.0 && observed_rate <= 1.0) {
        return Err(Error::Argument(format!(
            "observed rate {observed_rate} not in (0, 1]"
        )));
    }
    let (n, d) = shape;
    let total = n * d;
    let k = fraction_count(observed_rate, total).min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = DMatrix::from_element(n, d, false);
    for cell in index::sample(&mut rng, total, k) {
        mask[(cell / d, cell % d)] = true;
    }
    Ok(mask)
}

/// `(||X^ - X||_F / ||X||_F, ||X^ - X||_F^2 / (n d))`; the relative error of
/// an exact zero reconstruction of a zero matrix is 0.
pub fn reconstruction_errors(x_hat: &DMatrix<f64>, x_true: &DMatrix<f64>) -> Result<(f64, f64)> {
    if x_hat.shape() != x_true.shape() {
        return Err(Error::shape(x_true.shape(), x_hat.shape()));
    }
    let diff_sq = (x_hat - x_true).norm_squared();
    let truth = x_true.norm();
    let relative = if truth == 0.0 {
        if diff_sq == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff_sq.sqrt() / truth
    };
    let cells = x_true.len().max(1) as f64;
    Ok((relative, diff_sq / cells))
}

/// Column means and standard deviations over observed cells. Columns with
/// fewer than two observations or zero spread keep scale 1.
pub(crate) fn observed_column_stats(obs: &PartialMatrix) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = obs.shape();
    let mut means = vec![0.0; d];
    let mut scales = vec![1.0; d];
    for j in 0..d {
        let vals: Vec<f64> = (0..n)
            .filter(|&i| obs.mask()[(i, j)])
            .map(|i| obs.values()[(i, j)])
            .collect();
        if vals.is_empty() {
            continue;
        }
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        means[j] = m;
        if vals.len() >= 2 {
            let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
            if var > 0.0 {
                scales[j] = var.sqrt();
            }
        }
    }
    (means, scales)
}

pub(crate) fn standardize_columns(m: &mut DMatrix<f64>, means: &[f64], scales: &[f64]) {
    for (j, mut col) in m.column_iter_mut().enumerate() {
        col.apply(|v| *v = (*v - means[j]) / scales[j]);
    }
}

fn random_pick<R: Rng + ?Sized>(missing: &[Entry], k: usize, rng: &mut R) -> Pick {
    if missing.is_empty() {
        return Pick::Exhausted;
    }
    let k = k.min(missing.len());
    let mut chosen: Vec<Entry> = index::sample(rng, missing.len(), k)
        .into_iter()
        .map(|i| missing[i])
        .collect();
    chosen.sort();
    Pick::Batch(chosen)
}

/// Random entries added while they fit in the budget.
fn random_budget_pick<R: Rng + ?Sized>(missing: &[Entry], costs: &CostModel, budget: f64, rng: &mut R) -> Pick {
    if missing.is_empty() {
        return Pick::Exhausted;
    }
    let mut order: Vec<Entry> = missing.to_vec();
    order.shuffle(rng);
    let mut spent = 0.0;
    let mut chosen = Vec::new();
    for e in order {
        let c = costs.cost(e.col);
        if spent + c <= budget {
            spent += c;
            chosen.push(e);
        }
    }
    chosen.sort();
    Pick::Batch(chosen)
}

fn poss_pick<R: Rng + ?Sized>(
    scores: &[ScoredEntry],
    costs: &CostModel,
    budget: f64,
    plan: &ExperimentPlan,
    rng: &mut R,
) -> Result<Pick> {
    if scores.is_empty() {
        return Ok(Pick::Exhausted);
    }
    let pool = match select_top_k(scores, plan.poss_pool)? {
        Pick::Batch(p) => p,
        Pick::Exhausted => return Ok(Pick::Exhausted),
    };
    let lookup: std::collections::HashMap<Entry, f64> =
        scores.iter().map(|s| (s.entry, s.score)).collect();
    let candidates = pool
        .iter()
        .map(|&entry| Candidate {
            entry,
            informativeness: lookup[&entry],
            cost: costs.cost(entry.col),
        })
        .collect();
    let problem = BiObjectiveProblem::new(candidates, budget)?;
    let iterations = plan.poss_iterations.unwrap_or_else(|| problem.default_iterations());
    let mut chosen = poss_optimize(&problem, iterations, rng)?;
    chosen.sort();
    Ok(Pick::Batch(chosen))
}

struct Replicate<'a> {
    plan: &'a ExperimentPlan,
    seed: u64,
}

impl Replicate<'_> {
    fn run(&self, source: &DataSource) -> Result<ReplicateRun> {
        let plan = self.plan;
        let (dataset, standardize) = match source {
            DataSource::Synthetic(spec) => (spec.generate(&mut stream(self.seed, STREAM_DATA))?, false),
            DataSource::Fixed {
                dataset,
                standardize,
            } => (dataset.clone(), *standardize),
        };
        let split_seed = stream(self.seed, STREAM_SPLIT).random();
        let (train, test) = make_split(&dataset, plan.train_fraction, split_seed)?;
        if test.is_empty() {
            return Err(Error::Config("test split is empty; lower train_fraction".into()));
        }
        let (n, d) = train.features().shape();
        let mask_seed = stream(self.seed, STREAM_MASK).random();
        let mask = init_mask((n, d), plan.initial_observed_rate, mask_seed)?;

        let mut truth = train.features().clone();
        let mut test_x = test.features().clone();
        if standardize {
            let (means, scales) = observed_column_stats(&PartialMatrix::new(truth.clone(), mask.clone())?);
            standardize_columns(&mut truth, &means, &scales);
            standardize_columns(&mut test_x, &means, &scales);
        }
        let mut obs = PartialMatrix::new(truth.clone(), mask)?;

        let initial_missing = n * d - obs.observed_count();
        let batch = match plan.batch_fraction {
            Some(f) => fraction_count(f, initial_missing).max(1),
            None => plan.batch_size,
        };
        let provisional = CostModel::uniform(d, 1.0)?;
        let column_costs = match plan.costs {
            CostScheme::Uniform => provisional.column_costs().to_vec(),
            CostScheme::RandomInteger => {
                CostModel::random_integer(d, 1.0, &mut stream(self.seed, STREAM_COSTS))?
                    .column_costs()
                    .to_vec()
            }
        };
        let mean_cost = column_costs.iter().sum::<f64>() / d.max(1) as f64;
        let budget = plan.budget_per_round.unwrap_or(batch as f64 * mean_cost);
        let oracle = Oracle::new(truth, CostModel::new(column_costs, budget)?)?;

        let mut select_rng = stream(self.seed, STREAM_SELECT);
        let mut tracker = InformativenessTracker::new(plan.window);
        let mut warm: Option<DMatrix<f64>> = None;
        let mut records = Vec::with_capacity(plan.rounds);
        let mut queries = Vec::new();
        let mut cumulative_cost = 0.0;

        for round in 1..=plan.rounds {
            let ctx = |e: Error| Error::Experiment {
                replicate: 0,
                round,
                source: Box::new(e),
            };
            let res = fit(&obs, train.labels(), &plan.completion, warm.as_ref()).map_err(ctx)?;
            tracker.record_snapshot(&res.x_hat).map_err(ctx)?;

            let (rel, msq) = reconstruction_errors(&res.x_hat, oracle.ground_truth()).map_err(ctx)?;
            let scores = res.model.decision_values(&test_x).map_err(ctx)?;
            let labels = test.labels().as_slice();
            let test_auc = if test.has_both_classes() {
                auc(scores.as_slice(), labels).map_err(ctx)?
            } else {
                f64::NAN
            };
            let record = RoundRecord {
                round,
                cumulative_cost,
                queried_entries: queries.len(),
                reconstruction_error_relative: rel,
                reconstruction_error_mean_sq: msq,
                train_objective: res.final_objective(),
                test_accuracy: accuracy(scores.as_slice(), labels).map_err(ctx)?,
                test_auc,
            };
            records.push(record);
            if round == plan.rounds {
                break;
            }

            let missing = obs.missing_entries();
            let warmed_up = tracker.retained() >= 2;
            let pick = match plan.strategy {
                Strategy::Random => random_pick(&missing, batch, &mut select_rng),
                Strategy::Variance | Strategy::CostRatio if !warmed_up => {
                    random_pick(&missing, batch, &mut select_rng)
                }
                Strategy::Poss if !warmed_up => {
                    random_budget_pick(&missing, oracle.costs(), budget, &mut select_rng)
                }
                Strategy::Variance => {
                    select_top_k(&tracker.informativeness(obs.mask()).map_err(ctx)?, batch).map_err(ctx)?
                }
                Strategy::CostRatio => select_cost_ratio(
                    &tracker.informativeness(obs.mask()).map_err(ctx)?,
                    oracle.costs(),
                    batch,
                )
                .map_err(ctx)?,
                Strategy::Poss => poss_pick(
                    &tracker.informativeness(obs.mask()).map_err(ctx)?,
                    oracle.costs(),
                    budget,
                    plan,
                    &mut select_rng,
                )
                .map_err(ctx)?,
            };
            let batch_entries = match pick {
                Pick::Batch(b) => b,
                Pick::Exhausted => break,
            };
            for entry in batch_entries {
                let (value, cost) = oracle.query(entry).map_err(ctx)?;
                obs.reveal(entry, value).map_err(ctx)?;
                cumulative_cost += cost;
                queries.push(entry);
            }
            warm = Some(res.x_hat);
        }
        Ok(ReplicateRun { records, queries })
    }
}

fn mean_series(runs: &[ReplicateRun]) -> Vec<RoundRecord> {
    let longest = runs.iter().map(|r| r.records.len()).max().unwrap_or(0);
    (0..longest)
        .map(|k| {
            let rows: Vec<&RoundRecord> = runs.iter().filter_map(|r| r.records.get(k)).collect();
            let m = rows.len() as f64;
            let avg = |f: fn(&RoundRecord) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / m;
            RoundRecord {
                round: k + 1,
                cumulative_cost: avg(|r| r.cumulative_cost),
                queried_entries: (avg(|r| r.queried_entries as f64)).round() as usize,
                reconstruction_error_relative: avg(|r| r.reconstruction_error_relative),
                reconstruction_error_mean_sq: avg(|r| r.reconstruction_error_mean_sq),
                train_objective: avg(|r| r.train_objective),
                test_accuracy: avg(|r| r.test_accuracy),
                test_auc: avg(|r| r.test_auc),
            }
        })
        .collect()
}

/// Runs every replicate of `plan` (in parallel) on `source`.
pub fn run_experiment(plan: &ExperimentPlan, source: &DataSource) -> Result<ExperimentOutcome> {
    plan.validate()?;
    let replicates = (0..plan.replicates)
        .into_par_iter()
        .map(|r| {
            Replicate {
                plan,
                seed: replicate_seed(plan.seed, r),
            }
            .run(source)
            .map_err(|e| match e {
                Error::Experiment { round, source, .. } => Error::Experiment {
                    replicate: r,
                    round,
                    source,
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = mean_series(&replicates);
    Ok(ExperimentOutcome { replicates, mean })
}

//! Variance-based informativeness of missing entries and the batch
//! selection rules built on it.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Entry;

/// Per-entry sum of squared deviations over the retained completion
/// snapshots.
///
/// `window = 0` keeps every snapshot (streaming mean/M2 updates); otherwise
/// only the most recent `window` snapshots are kept.
#[derive(Debug, Clone)]
pub struct InformativenessTracker {
    window: usize,
    snapshots_seen: usize,
    shape: Option<(usize, usize)>,
    stats: Stats,
}

#[derive(Debug, Clone)]
enum Stats {
    Unbounded {
        count: usize,
        mean: DMatrix<f64>,
        m2: DMatrix<f64>,
    },
    Windowed(VecDeque<DMatrix<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredEntry {
    pub entry: Entry,
    pub score: f64,
}

impl InformativenessTracker {
    pub fn new(window: usize) -> Self {
        let stats = if window == 0 {
            Stats::Unbounded {
                count: 0,
                mean: DMatrix::zeros(0, 0),
                m2: DMatrix::zeros(0, 0),
            }
        } else {
            Stats::Windowed(VecDeque::with_capacity(window))
        };
        Self {
            window,
            snapshots_seen: 0,
            shape: None,
            stats,
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Total snapshots recorded, including evicted ones.
    pub fn snapshots_seen(&self) -> usize {
        self.snapshots_seen
    }

    /// Snapshots currently contributing to the scores.
    pub fn retained(&self) -> usize {
        match &self.stats {
            Stats::Unbounded { count, .. } => *count,
            Stats::Windowed(ring) => ring.len(),
        }
    }

    pub fn record_snapshot(&mut self, x_hat: &DMatrix<f64>) -> Result<()> {
        match self.shape {
            Some(s) if s != x_hat.shape() => return Err(Error::shape(s, x_hat.shape())),
            _ => self.shape = Some(x_hat.shape()),
        }
        if !x_hat.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("completion snapshot"));
        }
        match &mut self.stats {
            Stats::Unbounded { count, mean, m2 } => {
                if *count == 0 {
                    *mean = x_hat.clone();
                    *m2 = DMatrix::zeros(x_hat.nrows(), x_hat.ncols());
                } else {
                    let k = (*count + 1) as f64;
                    for ((m, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(x_hat.iter()) {
                        let delta = x - *m;
                        *m += delta / k;
                        *s += delta * (x - *m);
                    }
                }
                *count += 1;
            }
            Stats::Windowed(ring) => {
                if ring.len() == self.window {
                    ring.pop_front();
                }
                ring.push_back(x_hat.clone());
            }
        }
        self.snapshots_seen += 1;
        Ok(())
    }

    fn score_at(&self, i: usize, j: usize) -> f64 {
        match &self.stats {
            Stats::Unbounded { count, m2, .. } => {
                if *count < 2 {
                    0.0
                } else {
                    m2[(i, j)].max(0.0)
                }
            }
            Stats::Windowed(ring) => {
                if ring.len() < 2 {
                    return 0.0;
                }
                let mean = ring.iter().map(|s| s[(i, j)]).sum::<f64>() / ring.len() as f64;
                ring.iter().map(|s| (s[(i, j)] - mean).powi(2)).sum()
            }
        }
    }

    /// Scores every unobserved entry (mask false) in row-major order.
    pub fn informativeness(&self, mask: &DMatrix<bool>) -> Result<Vec<ScoredEntry>> {
        let shape = match self.shape {
            Some(s) => s,
            None => return Err(Error::Argument("no snapshots recorded".into())),
        };
        if mask.shape() != shape {
            return Err(Error::shape(shape, mask.shape()));
        }
        let mut out = Vec::new();
        for i in 0..shape.0 {
            for j in 0..shape.1 {
                if !mask[(i, j)] {
                    out.push(ScoredEntry {
                        entry: Entry::new(i, j),
                        score: self.score_at(i, j),
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Per-column acquisition costs and the per-round budget.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    column_costs: Vec<f64>,
    budget_per_round: f64,
}

impl CostModel {
    pub fn new(column_costs: Vec<f64>, budget_per_round: f64) -> Result<Self> {
        if let Some(c) = column_costs.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(Error::Argument(format!("column cost {c} is not positive")));
        }
        if !(budget_per_round > 0.0 && budget_per_round.is_finite()) {
            return Err(Error::Argument(format!(
                "budget {budget_per_round} is not positive"
            )));
        }
        Ok(Self {
            column_costs,
            budget_per_round,
        })
    }

    pub fn uniform(d: usize, budget_per_round: f64) -> Result<Self> {
        Self::new(vec![1.0; d], budget_per_round)
    }

    /// Integer costs drawn uniformly from {1, ..., 10}.
    pub fn random_integer<R: Rng + ?Sized>(d: usize, budget_per_round: f64, rng: &mut R) -> Result<Self> {
        let costs = (0..d).map(|_| rng.random_range(1..=10) as f64).collect();
        Self::new(costs, budget_per_round)
    }

    pub fn cost(&self, col: usize) -> f64 {
        self.column_costs[col]
    }

    pub fn column_costs(&self) -> &[f64] {
        &self.column_costs
    }

    pub fn budget_per_round(&self) -> f64 {
        self.budget_per_round
    }

    pub fn n_cols(&self) -> usize {
        self.column_costs.len()
    }
}

/// Outcome of a selection step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pick {
    Batch(Vec<Entry>),
    /// No unobserved entries remain.
    Exhausted,
}

impl Pick {
    pub fn entries(&self) -> &[Entry] {
        match self {
            Pick::Batch(e) => e,
            Pick::Exhausted => &[],
        }
    }
}

fn top_k_by<F>(scores: &[ScoredEntry], k: usize, key: F) -> Result<Pick>
where
    F: Fn(&ScoredEntry) -> f64,
{
    if k == 0 {
        return Err(Error::Argument("batch size must be >= 1".into()));
    }
    if scores.is_empty() {
        return Ok(Pick::Exhausted);
    }
    let mut keyed: Vec<(f64, Entry)> = scores.iter().map(|s| (key(s), s.entry)).collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.truncate(k);
    Ok(Pick::Batch(keyed.into_iter().map(|(_, e)| e).collect()))
}

/// The `k` highest-scoring entries; ties go to the lexicographically
/// smaller `(row, col)`.
pub fn select_top_k(scores: &[ScoredEntry], k: usize) -> Result<Pick> {
    top_k_by(scores, k, |s| s.score)
}

/// The `k` entries with the highest informativeness per unit cost.
pub fn select_cost_ratio(scores: &[ScoredEntry], costs: &CostModel, k: usize) -> Result<Pick> {
    if let Some(s) = scores.iter().find(|s| s.entry.col >= costs.n_cols()) {
        return Err(Error::len(costs.n_cols(), s.entry.col + 1));
    }
    top_k_by(scores, k, |s| s.score / costs.cost(s.entry.col))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn missing(n: usize, d: usize) -> DMatrix<bool> {
        DMatrix::from_element(n, d, false)
    }

    fn two_pass(values: &[f64]) -> f64 {
        if values.len() < 2 {
            return 0.0;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        values.iter().map(|v| (v - mean).powi(2)).sum()
    }

    fn scored(list: &[((usize, usize), f64)]) -> Vec<ScoredEntry> {
        list.iter()
            .map(|&((r, c), s)| ScoredEntry {
                entry: Entry::new(r, c),
                score: s,
            })
            .collect()
    }

    #[test]
    fn identical_snapshots_have_zero_score() {
        let mut t = InformativenessTracker::new(0);
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        t.record_snapshot(&x).unwrap();
        t.record_snapshot(&x).unwrap();
        assert!(t.informativeness(&missing(2, 2)).unwrap().iter().all(|s| s.score == 0.0));
    }

    #[test]
    fn unbounded_and_windowed_examples() {
        let mut full = InformativenessTracker::new(0);
        let mut win = InformativenessTracker::new(2);
        for v in [1.0, 2.0, 3.0] {
            full.record_snapshot(&scalar(v)).unwrap();
            win.record_snapshot(&scalar(v)).unwrap();
        }
        assert_relative_eq!(full.informativeness(&missing(1, 1)).unwrap()[0].score, 2.0);
        assert_relative_eq!(win.informativeness(&missing(1, 1)).unwrap()[0].score, 0.5);
        assert_eq!(win.snapshots_seen(), 3);
        assert_eq!(win.retained(), 2);
    }

    #[test]
    fn single_missing_entry_example() {
        let mut t = InformativenessTracker::new(0);
        for v in [0.0, 0.0, 4.0] {
            t.record_snapshot(&scalar(v)).unwrap();
        }
        assert_relative_eq!(
            t.informativeness(&missing(1, 1)).unwrap()[0].score,
            32.0 / 3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn fewer_than_two_snapshots_score_zero() {
        let mut t = InformativenessTracker::new(3);
        assert!(t.informativeness(&missing(1, 1)).is_err());
        t.record_snapshot(&scalar(5.0)).unwrap();
        assert_eq!(t.informativeness(&missing(1, 1)).unwrap()[0].score, 0.0);
    }

    #[test]
    fn observed_entries_are_excluded() {
        let mut t = InformativenessTracker::new(0);
        t.record_snapshot(&DMatrix::zeros(2, 2)).unwrap();
        let all = DMatrix::from_element(2, 2, true);
        assert!(t.informativeness(&all).unwrap().is_empty());
        let mut some = all.clone();
        some[(1, 0)] = false;
        let s = t.informativeness(&some).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].entry, Entry::new(1, 0));
    }

    #[test]
    fn shape_change_rejected() {
        let mut t = InformativenessTracker::new(0);
        t.record_snapshot(&DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(
            t.record_snapshot(&DMatrix::zeros(2, 3)),
            Err(Error::Dimension { .. })
        ));
        assert!(t.informativeness(&missing(3, 3)).is_err());
    }

    #[test]
    fn top_k_examples() {
        let s = scored(&[((0, 0), 5.0), ((1, 1), 9.0), ((2, 0), 7.0)]);
        assert_eq!(select_top_k(&s, 1).unwrap(), Pick::Batch(vec![Entry::new(1, 1)]));
        assert_eq!(
            select_top_k(&s, 2).unwrap(),
            Pick::Batch(vec![Entry::new(1, 1), Entry::new(2, 0)])
        );
        let tied = scored(&[((2, 0), 1.0), ((0, 3), 1.0), ((0, 1), 1.0)]);
        assert_eq!(
            select_top_k(&tied, 2).unwrap(),
            Pick::Batch(vec![Entry::new(0, 1), Entry::new(0, 3)])
        );
        assert_eq!(select_top_k(&s, 10).unwrap().entries().len(), 3);
        assert_eq!(select_top_k(&[], 2).unwrap(), Pick::Exhausted);
        assert!(select_top_k(&s, 0).is_err());
    }

    #[test]
    fn cost_ratio_examples() {
        let costs = CostModel::new(vec![4.0, 1.0], 10.0).unwrap();
        let s = scored(&[((0, 0), 4.0), ((0, 1), 3.0)]);
        assert_eq!(
            select_cost_ratio(&s, &costs, 1).unwrap(),
            Pick::Batch(vec![Entry::new(0, 1)])
        );
        let uniform = CostModel::uniform(2, 1.0).unwrap();
        assert_eq!(
            select_cost_ratio(&s, &uniform, 1).unwrap(),
            select_top_k(&s, 1).unwrap()
        );
        let doubled = CostModel::new(vec![8.0, 2.0], 10.0).unwrap();
        assert_eq!(
            select_cost_ratio(&s, &doubled, 1).unwrap(),
            select_cost_ratio(&s, &costs, 1).unwrap()
        );
    }

    #[test]
    fn cost_model_validation() {
        assert!(CostModel::new(vec![1.0, 0.0], 1.0).is_err());
        assert!(CostModel::new(vec![1.0], -1.0).is_err());
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let c = CostModel::random_integer(500, 5.0, &mut rng).unwrap();
        assert!(c.column_costs().iter().all(|&v| (1.0..=10.0).contains(&v) && v.fract() == 0.0));
        assert!(c.column_costs().contains(&1.0) && c.column_costs().contains(&10.0));
    }

    proptest! {
        #[test]
        fn streaming_matches_two_pass(
            values in prop::collection::vec(-100.0f64..100.0, 1..40),
            window in 0usize..8,
        ) {
            let mut t = InformativenessTracker::new(window);
            for (k, v) in values.iter().enumerate() {
                t.record_snapshot(&scalar(*v)).unwrap();
                let seen = &values[..=k];
                let kept = if window == 0 { seen } else { &seen[seen.len().saturating_sub(window)..] };
                let got = t.informativeness(&missing(1, 1)).unwrap()[0].score;
                prop_assert!((got - two_pass(kept)).abs() <= 1e-9 * (1.0 + two_pass(kept)));
                prop_assert!(got >= 0.0);
            }
        }

        #[test]
        fn wide_window_equals_unbounded(values in prop::collection::vec(-10.0f64..10.0, 1..10)) {
            let mut full = InformativenessTracker::new(0);
            let mut win = InformativenessTracker::new(values.len());
            for v in &values {
                full.record_snapshot(&scalar(*v)).unwrap();
                win.record_snapshot(&scalar(*v)).unwrap();
            }
            let a = full.informativeness(&missing(1, 1)).unwrap()[0].score;
            let b = win.informativeness(&missing(1, 1)).unwrap()[0].score;
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        }

        #[test]
        fn scaling_snapshots_scales_scores(values in prop::collection::vec(-10.0f64..10.0, 2..10), c in 0.1f64..10.0) {
            let mut a = InformativenessTracker::new(0);
            let mut b = InformativenessTracker::new(0);
            for v in &values {
                a.record_snapshot(&scalar(*v)).unwrap();
                b.record_snapshot(&scalar(*v * c)).unwrap();
            }
            let sa = a.informativeness(&missing(1, 1)).unwrap()[0].score;
            let sb = b.informativeness(&missing(1, 1)).unwrap()[0].score;
            prop_assert!((sb - c * c * sa).abs() <= 1e-8 * (1.0 + sb));
        }

        #[test]
        fn selection_is_bounded_and_from_candidates(
            raw in prop::collection::vec((0usize..5, 0usize..5, 0.0f64..3.0), 0..20),
            k in 1usize..6,
        ) {
            let mut seen = std::collections::HashSet::new();
            let s: Vec<ScoredEntry> = raw.into_iter()
                .filter(|(r, c, _)| seen.insert((*r, *c)))
                .map(|(r, c, v)| ScoredEntry { entry: Entry::new(r, c), score: v })
                .collect();
            let costs = CostModel::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], 1.0).unwrap();
            for pick in [select_top_k(&s, k).unwrap(), select_cost_ratio(&s, &costs, k).unwrap()] {
                prop_assert!(pick.entries().len() <= k);
                prop_assert!(pick.entries().iter().all(|e| s.iter().any(|c| c.entry == *e)));
            }
        }
    }
}

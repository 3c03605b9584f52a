//! Pareto optimization for budgeted subset selection.
//!
//! A candidate subset `s` is scored on two minimized objectives:
//!
//! ```text
//! j1(s) = +inf                  if s is empty or j2(s) >= 2b
//!       = -sum_{k in s} I_k     otherwise
//! j2(s) = sum_{k in s} C_k
//! ```
//!
//! The optimizer keeps an archive of mutually nondominated subsets, mutates a
//! random archived subset by independent bit flips, and keeps the offspring
//! only if nothing in the archive weakly dominates it. The returned subset is
//! the archived one with the smallest `j1` among those costing at most `b`.

use rand::Rng;
use rand_distr::{Distribution, Geometric};

use crate::error::{Error, Result};
use crate::matrix::Entry;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub entry: Entry,
    pub informativeness: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiObjectiveProblem {
    candidates: Vec<Candidate>,
    budget: f64,
}

impl BiObjectiveProblem {
    pub fn new(candidates: Vec<Candidate>, budget: f64) -> Result<Self> {
        if !(budget > 0.0 && budget.is_finite()) {
            return Err(Error::Argument(format!("budget {budget} is not positive")));
        }
        for c in &candidates {
            if !(c.cost > 0.0 && c.cost.is_finite()) {
                return Err(Error::Argument(format!("candidate cost {} is not positive", c.cost)));
            }
            if !(c.informativeness >= 0.0 && c.informativeness.is_finite()) {
                return Err(Error::Argument(format!(
                    "candidate informativeness {} is negative",
                    c.informativeness
                )));
            }
        }
        let mut entries: Vec<Entry> = candidates.iter().map(|c| c.entry).collect();
        entries.sort();
        if entries.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Argument("duplicate candidate entries".into()));
        }
        Ok(Self { candidates, budget })
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    fn objectives(&self, informativeness: f64, cost: f64, any_selected: bool) -> (f64, f64) {
        let j1 = if !any_selected || cost >= 2.0 * self.budget {
            f64::INFINITY
        } else {
            -informativeness
        };
        (j1, cost)
    }

    /// Iteration budget `ceil(2e * b'^2 * N)` with `b' = ceil(2b / min cost)`
    /// capped at `N`.
    pub fn default_iterations(&self) -> usize {
        let n = self.len();
        if n == 0 {
            return 1;
        }
        let min_cost = self
            .candidates
            .iter()
            .map(|c| c.cost)
            .fold(f64::INFINITY, f64::min);
        let b_prime = ((2.0 * self.budget / min_cost).ceil() as usize).clamp(1, n) as f64;
        let iters = (2.0 * std::f64::consts::E * b_prime * b_prime * n as f64).ceil();
        (iters as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub bits: Vec<bool>,
    /// Negated total informativeness, or `+inf` for excluded subsets.
    pub j1: f64,
    /// Total cost.
    pub j2: f64,
    informativeness: f64,
    selected: usize,
}

impl Solution {
    fn empty(n: usize) -> Self {
        Self {
            bits: vec![false; n],
            j1: f64::INFINITY,
            j2: 0.0,
            informativeness: 0.0,
            selected: 0,
        }
    }

    pub fn selected_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(k, _)| k)
    }

    pub fn is_excluded(&self) -> bool {
        self.j1.is_infinite()
    }
}

pub fn evaluate(problem: &BiObjectiveProblem, bits: &[bool]) -> Result<Solution> {
    if bits.len() != problem.len() {
        return Err(Error::len(problem.len(), bits.len()));
    }
    let mut informativeness = 0.0;
    let mut cost = 0.0;
    let mut selected = 0;
    for (c, _) in problem.candidates.iter().zip(bits).filter(|(_, &b)| b) {
        informativeness += c.informativeness;
        cost += c.cost;
        selected += 1;
    }
    let (j1, j2) = problem.objectives(informativeness, cost, selected > 0);
    Ok(Solution {
        bits: bits.to_vec(),
        j1,
        j2,
        informativeness,
        selected,
    })
}

/// `a` is no worse than `b` in both objectives and strictly better in one.
pub fn dominates(a: &Solution, b: &Solution) -> bool {
    a.j1 <= b.j1 && a.j2 <= b.j2 && (a.j1 < b.j1 || a.j2 < b.j2)
}

fn weakly_dominates(a: &Solution, b: &Solution) -> bool {
    a.j1 <= b.j1 && a.j2 <= b.j2
}

/// Flips each bit independently with probability `flip_prob`.
pub fn mutate<R: Rng + ?Sized>(bits: &[bool], flip_prob: f64, rng: &mut R) -> Result<Vec<bool>> {
    let mut out = bits.to_vec();
    for k in flip_positions(bits.len(), flip_prob, rng)? {
        out[k] = !out[k];
    }
    Ok(out)
}

/// Positions selected by independent Bernoulli(`p`) trials, drawn by
/// geometric gap sampling so the cost scales with the number of flips.
fn flip_positions<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Vec<usize>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Argument(format!("flip probability {p} not in (0, 1]")));
    }
    let gaps = Geometric::new(p).map_err(|e| Error::Argument(e.to_string()))?;
    let mut out = Vec::new();
    let mut pos: u64 = 0;
    loop {
        pos = pos.saturating_add(gaps.sample(rng));
        if pos >= n as u64 {
            return Ok(out);
        }
        out.push(pos as usize);
        pos += 1;
    }
}

/// Mutually nondominated solutions, kept sorted by increasing `j2` (hence
/// strictly decreasing `j1`).
#[derive(Debug, Clone, Default)]
pub struct SolutionArchive {
    solutions: Vec<Solution>,
}

impl SolutionArchive {
    pub fn with_empty(n: usize) -> Self {
        Self {
            solutions: vec![Solution::empty(n)],
        }
    }

    pub fn solutions(&self) -> &[Solution] {
        &self.solutions
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    /// Inserts `candidate` unless an archived solution weakly dominates it;
    /// on insertion, drops everything the candidate weakly dominates.
    /// Returns whether the candidate was kept.
    pub fn offer(&mut self, candidate: Solution) -> bool {
        let at_most = self.solutions.partition_point(|s| s.j2 <= candidate.j2);
        if at_most > 0 && self.solutions[at_most - 1].j1 <= candidate.j1 {
            return false;
        }
        let start = self.solutions.partition_point(|s| s.j2 < candidate.j2);
        let mut end = start;
        while end < self.solutions.len() && weakly_dominates(&candidate, &self.solutions[end]) {
            end += 1;
        }
        self.solutions.splice(start..end, std::iter::once(candidate));
        debug_assert!(self.is_mutually_nondominated());
        true
    }

    pub fn is_mutually_nondominated(&self) -> bool {
        self.solutions.iter().enumerate().all(|(i, a)| {
            self.solutions
                .iter()
                .enumerate()
                .all(|(j, b)| i == j || (!dominates(a, b) && (a.j1, a.j2) != (b.j1, b.j2)))
        })
    }

    /// Smallest `j1` among solutions with `j2 <= budget`, ties to lower `j2`.
    pub fn best_within(&self, budget: f64) -> Option<&Solution> {
        self.solutions
            .iter()
            .filter(|s| s.j2 <= budget)
            .min_by(|a, b| a.j1.total_cmp(&b.j1).then(a.j2.total_cmp(&b.j2)))
    }
}

#[derive(Debug, Clone)]
pub struct PossOutcome {
    pub archive: SolutionArchive,
    /// Candidate indices of the chosen subset.
    pub selected: Vec<usize>,
}

impl PossOutcome {
    pub fn entries(&self, problem: &BiObjectiveProblem) -> Vec<Entry> {
        self.selected.iter().map(|&k| problem.candidates[k].entry).collect()
    }
}

/// Runs the archive loop for `iterations` offspring with bit-flip rate
/// `flip_prob`.
pub fn poss_run<R: Rng + ?Sized>(
    problem: &BiObjectiveProblem,
    iterations: usize,
    flip_prob: f64,
    rng: &mut R,
) -> Result<PossOutcome> {
    if iterations == 0 {
        return Err(Error::Argument("iterations must be >= 1".into()));
    }
    let n = problem.len();
    let mut archive = SolutionArchive::with_empty(n);
    if n > 0 {
        for _ in 0..iterations {
            let parent = &archive.solutions[rng.random_range(0..archive.len())];
            let flips = flip_positions(n, flip_prob, rng)?;
            if flips.is_empty() {
                continue;
            }
            let mut bits = parent.bits.clone();
            let mut informativeness = parent.informativeness;
            let mut cost = parent.j2;
            let mut selected = parent.selected;
            for k in flips {
                let c = &problem.candidates[k];
                if bits[k] {
                    informativeness -= c.informativeness;
                    cost -= c.cost;
                    selected -= 1;
                } else {
                    informativeness += c.informativeness;
                    cost += c.cost;
                    selected += 1;
                }
                bits[k] = !bits[k];
            }
            if selected == 0 {
                cost = 0.0;
                informativeness = 0.0;
            }
            let (j1, j2) = problem.objectives(informativeness, cost, selected > 0);
            archive.offer(Solution {
                bits,
                j1,
                j2,
                informativeness,
                selected,
            });
        }
    }
    let selected = match archive.best_within(problem.budget) {
        Some(s) if !s.is_excluded() => s.selected_indices().collect(),
        _ => Vec::new(),
    };
    Ok(PossOutcome { archive, selected })
}

/// Budgeted subset selection with the default mutation rate `1/N`.
pub fn poss_optimize<R: Rng + ?Sized>(
    problem: &BiObjectiveProblem,
    iterations: usize,
    rng: &mut R,
) -> Result<Vec<Entry>> {
    let flip_prob = 1.0 / problem.len().max(1) as f64;
    Ok(poss_run(problem, iterations, flip_prob, rng)?.entries(problem))
}

/// Largest pool [`exhaustive_optimum`] accepts.
pub const EXHAUSTIVE_LIMIT: usize = 24;

/// Best total informativeness over all subsets within budget, by Gray-code
/// enumeration.
pub fn exhaustive_optimum(problem: &BiObjectiveProblem) -> Result<f64> {
    let n = problem.len();
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::Argument(format!(
            "exhaustive search limited to {EXHAUSTIVE_LIMIT} candidates, got {n}"
        )));
    }
    let (mut info, mut cost) = (0.0, 0.0);
    let mut bits = vec![false; n];
    let mut best = 0.0f64;
    for step in 1u64..1 << n {
        let k = step.trailing_zeros() as usize;
        let c = &problem.candidates[k];
        let sign = if bits[k] { -1.0 } else { 1.0 };
        bits[k] = !bits[k];
        info += sign * c.informativeness;
        cost += sign * c.cost;
        // Running sums drift; resum before a close call.
        if cost <= problem.budget + 1e-9 && info > best {
            let (i, c): (f64, f64) = bits
                .iter()
                .zip(&problem.candidates)
                .filter(|(b, _)| **b)
                .fold((0.0, 0.0), |a, (_, c)| (a.0 + c.informativeness, a.1 + c.cost));
            if c <= problem.budget {
                best = best.max(i);
            }
        }
    }
    Ok(best)
}

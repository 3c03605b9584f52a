//! Linear classifier with squared loss and the evaluation metrics used by the
//! experiment harness.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `f(x) = w^T x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: DVector<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn zeros(d: usize) -> Self {
        Self {
            weights: DVector::zeros(d),
            bias: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `X w + b 1`.
    pub fn decision_values(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::len(self.dim(), x.ncols()));
        }
        Ok((x * &self.weights).add_scalar(self.bias))
    }

    /// Sign of the decision value; exact zeros map to +1.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(self.decision_values(x)?.map(sign))
    }
}

pub(crate) fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRole {
    Train,
    Test,
}

/// Feature rows with ±1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSplit {
    features: DMatrix<f64>,
    labels: DVector<f64>,
    role: SplitRole,
}

impl LabeledSplit {
    pub fn new(features: DMatrix<f64>, labels: DVector<f64>, role: SplitRole) -> Result<Self> {
        check_labels(&labels)?;
        if features.nrows() != labels.len() {
            return Err(Error::len(features.nrows(), labels.len()));
        }
        Ok(Self {
            features,
            labels,
            role,
        })
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn role(&self) -> SplitRole {
        self.role
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn has_both_classes(&self) -> bool {
        self.labels.iter().any(|&y| y > 0.0) && self.labels.iter().any(|&y| y < 0.0)
    }
}

pub(crate) fn check_labels(labels: &DVector<f64>) -> Result<()> {
    match labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
        Some(y) => Err(Error::Argument(format!("label {y} is not +1 or -1"))),
        None => Ok(()),
    }
}

/// Exact minimizer of `||X w + b 1 - y||^2 + ridge ||w||^2` with the bias
/// left unpenalized.
///
/// The bias is eliminated by centering, which leaves the `d x d` system
/// `(Xc^T Xc + ridge I) w = Xc^T yc` and `b = mean(y) - mean(X)^T w`.
pub fn train_ridge(x: &DMatrix<f64>, labels: &DVector<f64>, ridge: f64) -> Result<LinearModel> {
    let (n, d) = x.shape();
    if n == 0 {
        return Err(Error::Argument("cannot train on zero rows".into()));
    }
    if labels.len() != n {
        return Err(Error::len(n, labels.len()));
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::Argument(format!("ridge must be >= 0, got {ridge}")));
    }
    if !x.iter().chain(labels.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("classifier training data"));
    }

    let col_means = x.row_mean();
    let y_mean = labels.mean();
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        row -= &col_means;
    }
    let yc = labels.add_scalar(-y_mean);

    let mut gram = xc.transpose() * &xc;
    for k in 0..d {
        gram[(k, k)] += ridge;
    }
    let rhs = xc.transpose() * yc;

    let weights = if d == 0 {
        DVector::zeros(0)
    } else {
        let scale = gram.diagonal().amax().max(f64::MIN_POSITIVE);
        let chol = gram.clone().cholesky().ok_or(Error::RankDeficient)?;
        // Cholesky succeeds on numerically singular Gram matrices; reject
        // those explicitly.
        let min_pivot = chol.l().diagonal().iter().fold(f64::INFINITY, |a, &v| a.min(v));
        if min_pivot * min_pivot <= 1e-13 * scale {
            return Err(Error::RankDeficient);
        }
        chol.solve(&rhs)
    };
    let bias = y_mean - col_means.transpose().dot(&weights);
    Ok(LinearModel { weights, bias })
}

fn check_pair(scores: &[f64], labels: &[f64]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::len(labels.len(), scores.len()));
    }
    if scores.is_empty() {
        return Err(Error::Argument("empty score vector".into()));
    }
    Ok(())
}

/// Fraction of positions where `sign(score)` (0 counts as +1) equals the label.
pub fn accuracy(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_pair(scores, labels)?;
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| sign(s) == y)
        .count();
    Ok(hits as f64 / scores.len() as f64)
}

/// Area under the ROC curve in Mann-Whitney form, ties counted one half.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_pair(scores, labels)?;
    let n_pos = labels.iter().filter(|&&y| y > 0.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("auc scores"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of mid-ranks (1-based) of the positives.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let mid_rank = (start + end + 1) as f64 / 2.0;
        let positives = order[start..end].iter().filter(|&&k| labels[k] > 0.0).count();
        rank_sum += mid_rank * positives as f64;
        start = end;
    }
    let p = n_pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n_neg as f64))
}

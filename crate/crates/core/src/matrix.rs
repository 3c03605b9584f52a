//! Partially observed matrices and the dense linear-algebra primitives the
//! solver, the acquisition strategies and the theory checks share.
//!
//! Everything is dense. The matrices this crate targets have at most a few
//! hundred thousand cells, which is well within what a full SVD can handle.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Cutoff, relative to the largest singular value, below which a singular
/// value is treated as zero when deciding the rank used by [`coherence`].
pub const RANK_CUTOFF: f64 = 1e-10;

/// A matrix cell, ordered lexicographically by `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
}

impl Entry {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Value grid plus observation mask. `mask[(i, j)] == true` means the entry
/// is observed and `values[(i, j)]` holds its true value. Unobserved cells
/// hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialMatrix {
    values: DMatrix<f64>,
    mask: DMatrix<bool>,
}

impl PartialMatrix {
    /// Builds a partial matrix; values under a false mask cell are zeroed.
    pub fn new(values: DMatrix<f64>, mask: DMatrix<bool>) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(Error::shape(values.shape(), mask.shape()));
        }
        let values = project_omega(&values, &mask)?;
        Ok(Self { values, mask })
    }

    pub fn fully_observed(values: DMatrix<f64>) -> Self {
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), true);
        Self { values, mask }
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn is_observed(&self, entry: Entry) -> bool {
        self.mask[(entry.row, entry.col)]
    }

    /// Number of observed cells, i.e. |Ω|.
    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    /// Unobserved cells in row-major order.
    pub fn missing_entries(&self) -> Vec<Entry> {
        let (n, d) = self.shape();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..d {
                if !self.mask[(i, j)] {
                    out.push(Entry::new(i, j));
                }
            }
        }
        out
    }

    /// Records the true value of a previously missing cell. A cell can only
    /// be revealed once.
    pub fn reveal(&mut self, entry: Entry, value: f64) -> Result<()> {
        let (n, d) = self.shape();
        if entry.row >= n || entry.col >= d {
            return Err(Error::Argument(format!(
                "entry ({}, {}) outside {n}x{d} matrix",
                entry.row, entry.col
            )));
        }
        if self.mask[(entry.row, entry.col)] {
            return Err(Error::Argument(format!(
                "entry ({}, {}) is already observed",
                entry.row, entry.col
            )));
        }
        self.mask[(entry.row, entry.col)] = true;
        self.values[(entry.row, entry.col)] = value;
        Ok(())
    }
}

/// The masking operator: keeps `m` on observed cells and zeroes the rest.
pub fn project_omega(m: &DMatrix<f64>, mask: &DMatrix<bool>) -> Result<DMatrix<f64>> {
    if m.shape() != mask.shape() {
        return Err(Error::shape(mask.shape(), m.shape()));
    }
    Ok(m.zip_map(mask, |v, keep| if keep { v } else { 0.0 }))
}

/// Economy SVD `m = u * diag(sigma) * v^T` with `r = min(n, d)`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (k, s) in self.sigma.iter().enumerate() {
            us.column_mut(k).scale_mut(*s);
        }
        us * self.v.transpose()
    }

    /// Number of singular values above `RANK_CUTOFF * sigma_max`.
    pub fn numerical_rank(&self) -> usize {
        let smax = self.sigma.iter().copied().fold(0.0, f64::max);
        if smax == 0.0 {
            return 0;
        }
        self.sigma.iter().filter(|&&s| s > RANK_CUTOFF * smax).count()
    }
}

fn ensure_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Singular values come back nonincreasing, and each column of `u` is signed
/// so that its largest-magnitude entry is positive (the matching `v` column
/// flips with it).
pub fn svd(m: &DMatrix<f64>) -> Result<SvdFactors> {
    ensure_finite(m, "svd input")?;
    let (n, d) = m.shape();
    let r = n.min(d);
    if r == 0 {
        return Ok(SvdFactors {
            u: DMatrix::zeros(n, 0),
            sigma: DVector::zeros(0),
            v: DMatrix::zeros(d, 0),
        });
    }

    let dec = m.clone().svd(true, true);
    let u_raw = dec.u.ok_or(Error::NonFinite("svd"))?;
    let v_raw = dec.v_t.ok_or(Error::NonFinite("svd"))?.transpose();
    let s_raw = dec.singular_values;

    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| s_raw[b].total_cmp(&s_raw[a]));

    let mut u = DMatrix::zeros(n, r);
    let mut v = DMatrix::zeros(d, r);
    let mut sigma = DVector::zeros(r);
    for (k, &src) in order.iter().enumerate() {
        let mut ucol = u_raw.column(src).clone_owned();
        let mut vcol = v_raw.column(src).clone_owned();
        let pivot = ucol
            .iter()
            .copied()
            .fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            ucol.neg_mut();
            vcol.neg_mut();
        }
        u.set_column(k, &ucol);
        v.set_column(k, &vcol);
        sigma[k] = s_raw[src].max(0.0);
    }
    if !sigma.iter().all(|s| s.is_finite()) {
        return Err(Error::NonFinite("svd"));
    }
    Ok(SvdFactors { u, sigma, v })
}

/// Sum of singular values.
pub fn trace_norm(m: &DMatrix<f64>) -> Result<f64> {
    ensure_finite(m, "trace norm input")?;
    if m.is_empty() {
        return Ok(0.0);
    }
    Ok(m.clone().singular_values().iter().map(|s| s.max(0.0)).sum())
}

pub fn frobenius_norm(m: &DMatrix<f64>) -> Result<f64> {
    ensure_finite(m, "frobenius norm input")?;
    Ok(m.norm())
}

/// Largest row norm over the left and right singular factors of the
/// numerically truncated SVD. Unnormalized, so the result lies in (0, 1].
pub fn coherence(m: &DMatrix<f64>) -> Result<f64> {
    let f = svd(m)?;
    let r = f.numerical_rank();
    if r == 0 {
        return Err(Error::UndefinedCoherence);
    }
    let max_row = |x: &DMatrix<f64>| {
        x.columns(0, r)
            .row_iter()
            .map(|row| row.norm())
            .fold(0.0, f64::max)
    };
    Ok(max_row(&f.u).max(max_row(&f.v)))
}

//! Numeric evaluation of the reconstruction-error bound and of the
//! Hadamard-product trace-norm inequality.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::completion::{fit, CompletionConfig};
use crate::error::{Error, Result};
use crate::harness::{init_mask, reconstruction_errors, SyntheticSpec};
use crate::matrix::{coherence, trace_norm, PartialMatrix};

/// Inputs of the reconstruction-error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    /// Absolute constant, 1 unless calibrated otherwise.
    pub c0: f64,
    /// Scale in the premise `||X||_tr^2 <= beta sqrt(r n d)`.
    pub beta: f64,
    pub r: usize,
    pub n: usize,
    pub d: usize,
    pub omega_size: usize,
    /// Coherence.
    pub mu: f64,
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        if self.omega_size == 0 {
            return Err(Error::Argument("|Omega| must be >= 1".into()));
        }
        if self.omega_size > self.n * self.d {
            return Err(Error::Argument(format!(
                "|Omega| = {} exceeds n*d = {}",
                self.omega_size,
                self.n * self.d
            )));
        }
        if self.r > self.n.min(self.d) {
            return Err(Error::Argument(format!(
                "rank {} exceeds min(n, d) = {}",
                self.r,
                self.n.min(self.d)
            )));
        }
        if !(self.c0 > 0.0) || !(self.beta >= 0.0) || !(self.mu >= 0.0) {
            return Err(Error::Argument("c0 must be > 0; beta and mu >= 0".into()));
        }
        Ok(())
    }

    /// `beta` that makes the premise tight for `x` at rank `r`:
    /// `||X||_tr^2 / sqrt(r n d)`.
    pub fn tight_beta(x: &DMatrix<f64>, r: usize) -> Result<f64> {
        let (n, d) = x.shape();
        let tr = trace_norm(x)?;
        Ok(tr * tr / ((r * n * d) as f64).sqrt())
    }
}

/// Upper bound on `(1/nd) ||X^* - X||_F^2`:
///
/// ```text
/// 2 C0 mu^2 beta sqrt(r (n+d) / |Omega|) sqrt(1 + (n+d) ln(n+d) / |Omega|)
/// ```
pub fn theorem1_bound(p: &BoundParams) -> Result<f64> {
    p.validate()?;
    let omega = p.omega_size as f64;
    let nd = (p.n + p.d) as f64;
    let sampling = (p.r as f64 * nd / omega).sqrt();
    let concentration = (1.0 + nd * nd.ln() / omega).sqrt();
    Ok(2.0 * p.c0 * p.mu * p.mu * p.beta * sampling * concentration)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma3Check {
    /// `||A o B||_tr`.
    pub lhs: f64,
    /// `mu(A)^2 ||A||_tr ||B||_tr`.
    pub rhs: f64,
    pub holds: bool,
}

/// Absolute slack allowed when comparing the two sides.
pub const LEMMA3_TOLERANCE: f64 = 1e-9;

/// Evaluates `||A o B||_tr <= mu(A)^2 ||A||_tr ||B||_tr`.
pub fn lemma3_check(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Lemma3Check> {
    if a.shape() != b.shape() {
        return Err(Error::shape(a.shape(), b.shape()));
    }
    let lhs = trace_norm(&a.component_mul(b))?;
    // mu(0) is undefined, but the right side carries a factor ||A||_tr = 0.
    let rhs = if a.iter().all(|&v| v == 0.0) {
        0.0
    } else {
        let mu = coherence(a)?;
        mu * mu * trace_norm(a)? * trace_norm(b)?
    };
    Ok(Lemma3Check {
        lhs,
        rhs,
        holds: lhs <= rhs + LEMMA3_TOLERANCE,
    })
}

/// One synthetic draw compared against its bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationTrial {
    pub n: usize,
    pub d: usize,
    pub r: usize,
    pub omega_size: usize,
    pub beta: f64,
    pub mu: f64,
    pub c0: f64,
    pub bound: f64,
    /// `(1/nd) ||X^ - X||_F^2`.
    pub measured: f64,
    pub measured_relative: f64,
    pub within_bound: bool,
}

/// Draws a rank-`r` synthetic instance, completes it from a uniform sample
/// of `observed_rate` of its cells, and evaluates the bound with `beta`
/// tight for the true matrix and `mu` its coherence.
pub fn calibration_trial(
    spec: &SyntheticSpec,
    observed_rate: f64,
    cfg: &CompletionConfig,
    c0: f64,
    seed: u64,
) -> Result<CalibrationTrial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ds = spec.generate(&mut rng)?;
    let x = &ds.features;
    let mask = init_mask(x.shape(), observed_rate, rng.random())?;
    let omega_size = mask.iter().filter(|&&m| m).count();
    let obs = PartialMatrix::new(x.clone(), mask)?;
    let result = fit(&obs, &ds.labels, cfg, None)?;
    let (measured_relative, measured) = reconstruction_errors(&result.x_hat, x)?;
    let params = BoundParams {
        c0,
        beta: BoundParams::tight_beta(x, spec.rank)?,
        r: spec.rank,
        n: spec.rows,
        d: spec.cols,
        omega_size,
        mu: coherence(x)?,
    };
    let bound = theorem1_bound(&params)?;
    Ok(CalibrationTrial {
        n: params.n,
        d: params.d,
        r: params.r,
        omega_size,
        beta: params.beta,
        mu: params.mu,
        c0,
        bound,
        measured,
        measured_relative,
        within_bound: measured <= bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma3Sweep {
    pub trials: usize,
    pub held: usize,
    /// Largest `lhs / rhs` seen.
    pub worst_ratio: f64,
}

/// Checks the inequality on `trials` Gaussian pairs with both sides drawn
/// from `1..=max_size`.
pub fn lemma3_sweep(trials: usize, max_size: usize, seed: u64) -> Result<Lemma3Sweep> {
    if max_size == 0 {
        return Err(Error::Argument("max size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held = 0;
    let mut worst_ratio = 0.0f64;
    for _ in 0..trials {
        let n = rng.random_range(1..=max_size);
        let d = rng.random_range(1..=max_size);
        let a = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let c = lemma3_check(&a, &b)?;
        if c.holds {
            held += 1;
        }
        if c.rhs > 0.0 {
            worst_ratio = worst_ratio.max(c.lhs / c.rhs);
        }
    }
    Ok(Lemma3Sweep {
        trials,
        held,
        worst_ratio,
    })
}

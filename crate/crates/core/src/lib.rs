//! Supervised low-rank matrix completion with active, cost-aware
//! acquisition of missing feature values.
//!
//! The pieces, bottom up:
//!
//! - [`matrix`]: partially observed matrices, SVD, norms, coherence.
//! - [`completion`]: the alternating trace-norm / classifier solver.
//! - [`classifier`]: ridge-fitted linear model, accuracy and AUC.
//! - [`acquisition`]: variance informativeness and top-k / cost-ratio picks.
//! - [`poss`]: Pareto subset selection under a cost budget.
//! - [`theory`]: the reconstruction-error bound and the Hadamard inequality.
//! - [`harness`]: the closed acquire / complete / train / evaluate loop.
//! - [`io`]: datasets, experiment configs and result files.
//! - [`cli`]: the `featacq` command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod classifier;
pub mod cli;
pub mod completion;
pub mod error;
pub mod harness;
pub mod io;
pub mod matrix;
pub mod poss;
pub mod theory;

pub use error::{Error, Result};

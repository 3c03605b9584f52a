//! Supervised matrix completion.
//!
//! Minimizes
//!
//! ```text
//! F(X^, f) = 1/2 ||R_Omega(X^ - X)||_F^2 + lambda1 ||X^||_tr
//!          + lambda2 (||X^ w + b 1 - y||^2 + ridge ||w||^2)
//! ```
//!
//! by alternating between an accelerated proximal gradient solve for `X^`
//! (classifier fixed) and a closed-form ridge fit for `f = (w, b)` (`X^`
//! fixed). With `ridge = 0` the last term is the plain squared classification
//! loss.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::classifier::{check_labels, train_ridge, LinearModel};
use crate::error::{Error, Result};
use crate::matrix::{project_omega, svd, trace_norm, PartialMatrix};

/// Upper limit on the backtracked Lipschitz estimate before giving up.
const MAX_LIPSCHITZ: f64 = 1e30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompletionConfig {
    /// Trace-norm weight.
    pub lambda1: f64,
    /// Supervised-loss weight.
    pub lambda2: f64,
    /// Initial Lipschitz estimate, > 1.
    pub l_init: f64,
    /// Backtracking growth factor, > 1.
    pub gamma: f64,
    /// Initial momentum parameter in (0, 1].
    pub theta0: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Relative objective change below which a loop stops.
    pub tol: f64,
    /// Classifier regularizer.
    pub ridge: f64,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            l_init: 1.1,
            gamma: 2.0,
            theta0: 1.0,
            max_outer: 10,
            max_inner: 300,
            tol: 1e-6,
            ridge: 1e-2,
        }
    }
}

impl CompletionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Argument(format!("completion config: {what}")));
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return bad("lambda1 must be a finite value >= 0");
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return bad("lambda2 must be a finite value >= 0");
        }
        if !(self.l_init > 1.0 && self.l_init.is_finite()) {
            return bad("l_init must be > 1");
        }
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return bad("gamma must be > 1");
        }
        if !(self.theta0 > 0.0 && self.theta0 <= 1.0) {
            return bad("theta0 must lie in (0, 1]");
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return bad("iteration budgets must be >= 1");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be > 0");
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return bad("ridge must be a finite value >= 0");
        }
        Ok(())
    }
}

/// Iterates of the accelerated proximal gradient loop.
#[derive(Debug, Clone)]
pub struct ApgState {
    pub x_curr: DMatrix<f64>,
    pub x_prev: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub theta_curr: f64,
    pub theta_prev: f64,
    pub l: f64,
}

impl ApgState {
    fn new(warm_start: DMatrix<f64>, cfg: &CompletionConfig) -> Self {
        Self {
            x_prev: warm_start.clone(),
            z: warm_start.clone(),
            x_curr: warm_start,
            theta_curr: cfg.theta0,
            theta_prev: cfg.theta0,
            l: cfg.l_init,
        }
    }

    fn extrapolate(&mut self) {
        let weight = self.theta_curr * (1.0 / self.theta_prev - 1.0);
        self.z = &self.x_curr + (&self.x_curr - &self.x_prev) * weight;
    }

    fn advance(&mut self, x_next: DMatrix<f64>) {
        let t = self.theta_curr;
        let t2 = t * t;
        self.theta_prev = t;
        self.theta_curr = ((t2 * t2 + 4.0 * t2).sqrt() - t2) / 2.0;
        self.x_prev = std::mem::replace(&mut self.x_curr, x_next);
    }
}

/// Both sides of the backtracking test at an accepted inner step:
/// `g(X_next) + lambda1 ||X_next||_tr <= h(X_next, Z) + L/2 ||X_next - Z||^2`.
#[derive(Debug, Clone, Copy)]
pub struct MajorizationCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub lipschitz: f64,
}

#[derive(Debug, Clone)]
pub struct ApgOutcome {
    /// Lowest-objective iterate seen, the warm start included.
    pub x_hat: DMatrix<f64>,
    pub objective: f64,
    /// Composite objective `g + lambda1 ||.||_tr` at each accepted step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub lipschitz: f64,
    pub checks: Vec<MajorizationCheck>,
}

#[derive(Debug, Clone)]
pub struct CompletionResult {
    pub x_hat: DMatrix<f64>,
    pub model: LinearModel,
    /// Full objective after each outer alternation round.
    pub objective_trace: Vec<f64>,
    pub inner_iterations: usize,
    pub converged: bool,
}

impl CompletionResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("objective trace is never empty")
    }
}

fn check_inputs(
    m: &DMatrix<f64>,
    obs: &PartialMatrix,
    model: &LinearModel,
    labels: &DVector<f64>,
) -> Result<()> {
    if m.shape() != obs.shape() {
        return Err(Error::shape(obs.shape(), m.shape()));
    }
    if model.dim() != obs.n_cols() {
        return Err(Error::len(obs.n_cols(), model.dim()));
    }
    if labels.len() != obs.n_rows() {
        return Err(Error::len(obs.n_rows(), labels.len()));
    }
    Ok(())
}

fn supervised_residual(m: &DMatrix<f64>, model: &LinearModel, labels: &DVector<f64>) -> DVector<f64> {
    (m * &model.weights).add_scalar(model.bias) - labels
}

/// Smooth part `g(Z) = 1/2 ||R_Omega(Z - X)||^2 + lambda2 ||Z w + b - y||^2`.
pub fn smooth_loss(
    z: &DMatrix<f64>,
    obs: &PartialMatrix,
    model: &LinearModel,
    labels: &DVector<f64>,
    lambda2: f64,
) -> Result<f64> {
    check_inputs(z, obs, model, labels)?;
    let data = project_omega(&(z - obs.values()), obs.mask())?.norm_squared();
    let sup = if lambda2 == 0.0 {
        0.0
    } else {
        lambda2 * supervised_residual(z, model, labels).norm_squared()
    };
    Ok(0.5 * data + sup)
}

/// `grad g(Z) = R_Omega(Z - X) + 2 lambda2 (Z w + b - y) w^T`.
pub fn grad_g(
    z: &DMatrix<f64>,
    obs: &PartialMatrix,
    model: &LinearModel,
    labels: &DVector<f64>,
    lambda2: f64,
) -> Result<DMatrix<f64>> {
    check_inputs(z, obs, model, labels)?;
    let mut grad = project_omega(&(z - obs.values()), obs.mask())?;
    if lambda2 != 0.0 {
        let r = supervised_residual(z, model, labels);
        grad.ger(2.0 * lambda2, &r, &model.weights, 1.0);
    }
    Ok(grad)
}

/// Full alternating objective at `(x_hat, model)`.
pub fn objective(
    x_hat: &DMatrix<f64>,
    obs: &PartialMatrix,
    model: &LinearModel,
    labels: &DVector<f64>,
    cfg: &CompletionConfig,
) -> Result<f64> {
    let g = smooth_loss(x_hat, obs, model, labels, cfg.lambda2)?;
    let tr = if cfg.lambda1 == 0.0 {
        0.0
    } else {
        cfg.lambda1 * trace_norm(x_hat)?
    };
    let reg = cfg.lambda2 * cfg.ridge * model.weights.norm_squared();
    Ok(g + tr + reg)
}

/// Singular value thresholding `U max(S - tau, 0) V^T`, the proximal map of
/// `tau ||.||_tr`.
pub fn svt(m: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    Ok(svt_with_norm(m, tau)?.0)
}

/// SVT plus the trace norm of its output.
fn svt_with_norm(m: &DMatrix<f64>, tau: f64) -> Result<(DMatrix<f64>, f64)> {
    if !(tau >= 0.0) {
        return Err(Error::Argument(format!("threshold must be >= 0, got {tau}")));
    }
    let f = svd(m)?;
    let kept: Vec<(usize, f64)> = f
        .sigma
        .iter()
        .enumerate()
        .map(|(k, &s)| (k, s - tau))
        .filter(|&(_, s)| s > 0.0)
        .collect();
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    let mut norm = 0.0;
    for (k, s) in kept {
        out.ger(s, &f.u.column(k), &f.v.column(k), 1.0);
        norm += s;
    }
    Ok((out, norm))
}

/// Minimizes `g(X^) + lambda1 ||X^||_tr` with the classifier held fixed and
/// returns the best iterate.
pub fn apg_minimize(
    obs: &PartialMatrix,
    model: &LinearModel,
    labels: &DVector<f64>,
    cfg: &CompletionConfig,
    warm_start: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    Ok(apg_run(obs, model, labels, cfg, warm_start)?.x_hat)
}

/// [`apg_minimize`] with the full iteration record.
pub fn apg_run(
    obs: &PartialMatrix,
    model: &LinearModel,
    labels: &DVector<f64>,
    cfg: &CompletionConfig,
    warm_start: &DMatrix<f64>,
) -> Result<ApgOutcome> {
    cfg.validate()?;
    check_inputs(warm_start, obs, model, labels)?;
    let lambda1 = cfg.lambda1;
    let lambda2 = cfg.lambda2;

    let composite = |g: f64, tr: f64| g + lambda1 * tr;
    let warm_obj = composite(
        smooth_loss(warm_start, obs, model, labels, lambda2)?,
        if lambda1 == 0.0 { 0.0 } else { trace_norm(warm_start)? },
    );
    if !warm_obj.is_finite() {
        return Err(Error::Divergence { iteration: 0 });
    }

    let mut state = ApgState::new(warm_start.clone(), cfg);
    let mut best = (warm_start.clone(), warm_obj);
    let mut prev_obj = warm_obj;
    let mut trace = Vec::new();
    let mut checks = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for k in 0..cfg.max_inner {
        iterations = k + 1;
        state.extrapolate();
        let g_z = smooth_loss(&state.z, obs, model, labels, lambda2)?;
        let grad = grad_g(&state.z, obs, model, labels, lambda2)?;

        let (x_next, tr_next, g_next, check) = loop {
            let step = &state.z - &grad / state.l;
            let (x_next, tr_next) = svt_with_norm(&step, lambda1 / state.l)?;
            let diff = &x_next - &state.z;
            let diff_sq = diff.norm_squared();
            // g is quadratic, so g(X) - g(Z) - <grad g(Z), X - Z> equals the
            // curvature term below exactly; testing it directly avoids the
            // cancellation in the expanded form.
            let curvature = 0.5 * project_omega(&diff, obs.mask())?.norm_squared()
                + lambda2 * (&diff * &model.weights).norm_squared();
            let g_next = smooth_loss(&x_next, obs, model, labels, lambda2)?;
            if curvature <= 0.5 * state.l * diff_sq {
                let lhs = composite(g_next, tr_next);
                let rhs = g_z + grad.dot(&diff) + lambda1 * tr_next + 0.5 * state.l * diff_sq;
                let check = MajorizationCheck {
                    lhs,
                    rhs,
                    lipschitz: state.l,
                };
                break (x_next, tr_next, g_next, check);
            }
            state.l *= cfg.gamma;
            if !(state.l < MAX_LIPSCHITZ) {
                return Err(Error::Divergence { iteration: k });
            }
        };

        let obj = composite(g_next, tr_next);
        if !obj.is_finite() || !x_next.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { iteration: k });
        }
        checks.push(check);
        trace.push(obj);
        if obj < best.1 {
            best = (x_next.clone(), obj);
        }
        state.advance(x_next);

        let change = (prev_obj - obj).abs() / prev_obj.abs().max(f64::MIN_POSITIVE);
        prev_obj = obj;
        if change < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(ApgOutcome {
        x_hat: best.0,
        objective: best.1,
        objective_trace: trace,
        iterations,
        converged,
        lipschitz: state.l,
        checks,
    })
}

/// Alternates the completion solve and the classifier fit.
///
/// When every entry is observed the data are returned unchanged and only
/// the classifier is trained. When `lambda2 = 0` the matrix block does not
/// depend on the classifier, so a single round is exact.
pub fn fit(
    obs: &PartialMatrix,
    labels: &DVector<f64>,
    cfg: &CompletionConfig,
    warm_start: Option<&DMatrix<f64>>,
) -> Result<CompletionResult> {
    cfg.validate()?;
    check_labels(labels)?;
    if labels.len() != obs.n_rows() {
        return Err(Error::len(obs.n_rows(), labels.len()));
    }

    if obs.is_fully_observed() {
        let x_hat = obs.values().clone();
        let model = train_ridge(&x_hat, labels, cfg.ridge)?;
        let obj = objective(&x_hat, obs, &model, labels, cfg)?;
        return Ok(CompletionResult {
            x_hat,
            model,
            objective_trace: vec![obj],
            inner_iterations: 0,
            converged: true,
        });
    }

    let mut x_hat = match warm_start {
        Some(w) => {
            if w.shape() != obs.shape() {
                return Err(Error::shape(obs.shape(), w.shape()));
            }
            w.clone()
        }
        None => obs.values().clone(),
    };
    let mut model = train_ridge(&x_hat, labels, cfg.ridge)?;
    let mut prev_obj = objective(&x_hat, obs, &model, labels, cfg)?;
    let mut trace = Vec::new();
    let mut inner = 0;
    let mut converged = false;

    let rounds = if cfg.lambda2 == 0.0 { 1 } else { cfg.max_outer };
    for _ in 0..rounds {
        let run = apg_run(obs, &model, labels, cfg, &x_hat)?;
        inner += run.iterations;
        x_hat = run.x_hat;
        model = train_ridge(&x_hat, labels, cfg.ridge)?;
        let obj = objective(&x_hat, obs, &model, labels, cfg)?;
        if !obj.is_finite() {
            return Err(Error::Divergence { iteration: inner });
        }
        trace.push(obj);
        if cfg.lambda2 == 0.0 {
            converged = run.converged;
            break;
        }
        let change = (prev_obj - obj).abs() / prev_obj.abs().max(f64::MIN_POSITIVE);
        prev_obj = obj;
        if change < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(CompletionResult {
        x_hat,
        model,
        objective_trace: trace,
        inner_iterations: inner,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(
        rng: &mut ChaCha8Rng,
        n: usize,
        d: usize,
        rate: f64,
    ) -> (PartialMatrix, LinearModel, DVector<f64>) {
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0));
        let mask = DMatrix::from_fn(n, d, |_, _| rng.random_bool(rate));
        let model = LinearModel {
            weights: DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)),
            bias: rng.random_range(-0.5..0.5),
        };
        let y = DVector::from_fn(n, |_, _| if rng.random_bool(0.5) { 1.0 } else { -1.0 });
        (PartialMatrix::new(x, mask).unwrap(), model, y)
    }

    fn low_rank(rng: &mut ChaCha8Rng, n: usize, d: usize, r: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(d, r, |_, _| rng.random_range(-1.0..1.0));
        a * b.transpose()
    }

    #[test]
    fn objective_examples() {
        let cfg0 = CompletionConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            ..Default::default()
        };
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let full = PartialMatrix::fully_observed(x.clone());
        let y = DVector::from_vec(vec![1.0, -1.0]);
        let m = LinearModel::zeros(2);
        assert_eq!(objective(&x, &full, &m, &y, &cfg0).unwrap(), 0.0);

        let empty = PartialMatrix::new(x.clone(), DMatrix::from_element(2, 2, false)).unwrap();
        let cfg1 = CompletionConfig {
            lambda1: 1.0,
            lambda2: 0.0,
            ..Default::default()
        };
        assert_eq!(objective(&DMatrix::zeros(2, 2), &empty, &m, &y, &cfg1).unwrap(), 0.0);

        let mut mask = DMatrix::from_element(2, 2, false);
        mask[(0, 0)] = true;
        let obs = PartialMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]), mask)
            .unwrap();
        let val = objective(&DMatrix::identity(2, 2), &obs, &m, &y, &cfg1).unwrap();
        assert_relative_eq!(val, 2.5, epsilon = 1e-12);
    }

    #[test]
    fn grad_examples() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let obs = PartialMatrix::fully_observed(x.clone());
        let y = DVector::from_vec(vec![1.0, -1.0]);
        let m = LinearModel::zeros(2);
        assert_eq!(grad_g(&x, &obs, &m, &y, 0.0).unwrap(), DMatrix::zeros(2, 2));

        let mut mask = DMatrix::from_element(2, 2, false);
        mask[(0, 0)] = true;
        let obs = PartialMatrix::new(x.clone(), mask).unwrap();
        let mut z = DMatrix::zeros(2, 2);
        z[(0, 0)] = 4.0;
        z[(1, 1)] = 9.0;
        let g = grad_g(&z, &obs, &m, &y, 0.0).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.0]));
        assert!(grad_g(&DMatrix::zeros(3, 2), &obs, &m, &y, 0.0).is_err());
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &lambda2 in &[0.0, 1.0] {
            let (obs, model, y) = random_instance(&mut rng, 6, 4, 0.6);
            let z = DMatrix::from_fn(6, 4, |_, _| rng.random_range(-2.0..2.0));
            let g = grad_g(&z, &obs, &model, &y, lambda2).unwrap();
            let h = 1e-6;
            let mut fd = DMatrix::zeros(6, 4);
            for i in 0..6 {
                for j in 0..4 {
                    let mut zp = z.clone();
                    let mut zm = z.clone();
                    zp[(i, j)] += h;
                    zm[(i, j)] -= h;
                    fd[(i, j)] = (smooth_loss(&zp, &obs, &model, &y, lambda2).unwrap()
                        - smooth_loss(&zm, &obs, &model, &y, lambda2).unwrap())
                        / (2.0 * h);
                }
            }
            let rel = (&g - &fd).norm() / g.norm().max(1e-12);
            assert!(rel < 1e-5, "lambda2={lambda2}: rel err {rel}");
        }
    }

    #[test]
    fn svt_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = DMatrix::from_fn(4, 3, |_, _| rng.random_range(-1.0..1.0));
        assert_relative_eq!(svt(&m, 0.0).unwrap(), m, epsilon = 1e-10);
        let smax = svd(&m).unwrap().sigma[0];
        assert_eq!(svt(&m, smax).unwrap(), DMatrix::zeros(4, 3));
        assert_eq!(svt(&m, smax * 3.0).unwrap(), DMatrix::zeros(4, 3));
        let d = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        assert_relative_eq!(
            svt(&d, 2.0).unwrap(),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            epsilon = 1e-12
        );
        assert!(svt(&d, -1.0).is_err());
    }

    #[test]
    fn theta_sequence_stays_in_unit_interval() {
        let cfg = CompletionConfig::default();
        let mut s = ApgState::new(DMatrix::zeros(1, 1), &cfg);
        let mut last = s.theta_curr;
        for _ in 0..1000 {
            s.advance(DMatrix::zeros(1, 1));
            assert!(s.theta_curr > 0.0 && s.theta_curr <= 1.0);
            assert!(s.theta_curr < last);
            // (1 - t_{k+1}) / t_{k+1}^2 = 1 / t_k^2
            let lhs = (1.0 - s.theta_curr) / (s.theta_curr * s.theta_curr);
            assert_relative_eq!(lhs, 1.0 / (last * last), max_relative = 1e-9);
            last = s.theta_curr;
        }
    }

    #[test]
    fn apg_fully_observed_unregularized_recovers_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(5, 4, |_, _| rng.random_range(-1.0..1.0));
        let obs = PartialMatrix::fully_observed(x.clone());
        let y = DVector::from_element(5, 1.0);
        let cfg = CompletionConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            tol: 1e-12,
            ..Default::default()
        };
        let out = apg_run(&obs, &LinearModel::zeros(4), &y, &cfg, &DMatrix::zeros(5, 4)).unwrap();
        assert!((out.x_hat - x).norm() < 1e-5);
        assert!(out.objective < 1e-10);
    }

    #[test]
    fn apg_heavy_shrinkage_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (obs, model, y) = random_instance(&mut rng, 6, 5, 0.7);
        let cfg = CompletionConfig {
            lambda1: obs.values().norm_squared(),
            lambda2: 0.0,
            ..Default::default()
        };
        let x = apg_minimize(&obs, &model, &y, &cfg, obs.values()).unwrap();
        assert!(x.norm() < 1e-9, "{}", x.norm());
    }

    #[test]
    fn apg_recovers_low_rank_better_than_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let truth = low_rank(&mut rng, 20, 10, 2) * 3.0;
        let mask = DMatrix::from_fn(20, 10, |_, _| rng.random_bool(0.8));
        let obs = PartialMatrix::new(truth.clone(), mask).unwrap();
        let y = DVector::from_element(20, 1.0);
        let cfg = CompletionConfig {
            lambda1: 1.0,
            lambda2: 0.0,
            ..Default::default()
        };
        let model = LinearModel::zeros(10);
        let out = apg_run(&obs, &model, &y, &cfg, obs.values()).unwrap();
        let err = (&out.x_hat - &truth).norm() / truth.norm();
        assert!(err < 1.0, "relative error {err}");
        let warm_obj = objective(obs.values(), &obs, &model, &y, &cfg).unwrap();
        assert!(out.objective <= warm_obj);
        for c in &out.checks {
            assert!(c.lhs <= c.rhs + 1e-9 * c.rhs.abs().max(1.0), "{c:?}");
            assert!(c.lipschitz >= cfg.l_init);
        }
    }

    #[test]
    fn backtracking_grows_lipschitz_with_supervision() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (obs, mut model, y) = random_instance(&mut rng, 8, 5, 0.6);
        model.weights *= 5.0;
        let cfg = CompletionConfig::default();
        let out = apg_run(&obs, &model, &y, &cfg, obs.values()).unwrap();
        let lip = 1.0 + 2.0 * cfg.lambda2 * model.weights.norm_squared();
        assert!(out.lipschitz > cfg.l_init);
        assert!(out.lipschitz <= cfg.gamma * lip);
    }

    #[test]
    fn fit_fully_observed_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = DMatrix::from_fn(12, 3, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(12, |i, _| if x[(i, 0)] > 0.0 { 1.0 } else { -1.0 });
        let obs = PartialMatrix::fully_observed(x.clone());
        let cfg = CompletionConfig::default();
        let res = fit(&obs, &y, &cfg, None).unwrap();
        assert_eq!(res.x_hat, x);
        assert_eq!(res.model, train_ridge(&x, &y, cfg.ridge).unwrap());
    }

    #[test]
    fn fit_without_supervision_matches_single_apg() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (obs, _, y) = random_instance(&mut rng, 10, 6, 0.6);
        let cfg = CompletionConfig {
            lambda2: 0.0,
            ..Default::default()
        };
        let res = fit(&obs, &y, &cfg, None).unwrap();
        let direct = apg_minimize(&obs, &LinearModel::zeros(6), &y, &cfg, obs.values()).unwrap();
        assert_eq!(res.x_hat, direct);
    }

    #[test]
    fn fit_trace_is_nonincreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..5 {
            let (obs, _, y) = random_instance(&mut rng, 12, 5, 0.6);
            let res = fit(&obs, &y, &CompletionConfig::default(), None).unwrap();
            assert!(!res.objective_trace.is_empty());
            for w in res.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-10, "{:?}", res.objective_trace);
            }
        }
    }

    #[test]
    fn warm_start_from_previous_solution_never_hurts() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let (obs, _, y) = random_instance(&mut rng, 15, 6, 0.5);
        let cfg = CompletionConfig {
            max_outer: 3,
            max_inner: 40,
            ..Default::default()
        };
        let cold = fit(&obs, &y, &cfg, None).unwrap();
        let warm = fit(&obs, &y, &cfg, Some(&cold.x_hat)).unwrap();
        assert!(warm.final_objective() <= cold.final_objective() + 1e-10);
    }

    #[test]
    fn config_validation() {
        let bad = [
            CompletionConfig { lambda1: -1.0, ..Default::default() },
            CompletionConfig { l_init: 1.0, ..Default::default() },
            CompletionConfig { gamma: 0.5, ..Default::default() },
            CompletionConfig { theta0: 0.0, ..Default::default() },
            CompletionConfig { theta0: 1.5, ..Default::default() },
            CompletionConfig { tol: 0.0, ..Default::default() },
            CompletionConfig { max_inner: 0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert!(CompletionConfig::default().validate().is_ok());
    }
}

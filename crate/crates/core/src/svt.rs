//! Iterative soft-impute with entrywise clipping.
//!
//! Starting from `M_old = 0`, each iteration fills the unobserved positions
//! of `Y` with the current guess, soft-thresholds the singular values of the
//! result, tests the exit rule on the change, and clips the new iterate to
//! `[-a, a]` before the next pass. The returned estimate is the last
//! unclipped iterate.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{
    clip, ensure_same_shape, frobenius_norm, nuclear_norm, operator_norm, restrict,
    soft_threshold_full, sup_norm, DenseMatrix, IndexSet, Thresholded,
};
use crate::sampling::{MarginalSummary, ObservationSet};

pub const DEFAULT_MAX_ITERS: usize = 5000;
pub const DEFAULT_C_STAR: f64 = 3.0;

/// A regularization level given directly or by one of the two selection rules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaChoice {
    Value(f64),
    Rule(LambdaRule),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum LambdaRule {
    /// `3 (3 sigma sqrt(2L) + c* b sqrt(2 log d))`.
    General {
        sigma: f64,
        b: f64,
        #[serde(default = "default_c_star")]
        c_star: f64,
    },
    /// `18 b sqrt(2L)`, for the regime `n > m log d`.
    Dense { b: f64 },
}

fn default_c_star() -> f64 {
    DEFAULT_C_STAR
}

impl LambdaChoice {
    /// Resolves to a positive level given the marginal bound `L` and
    /// `d = m1 + m2`.
    pub fn resolve(&self, l: f64, d: usize) -> Result<f64> {
        let lambda = match *self {
            Self::Value(v) => v,
            Self::Rule(LambdaRule::General { sigma, b, c_star }) => {
                select_lambda_general(sigma, b, l, d, c_star)?
            }
            Self::Rule(LambdaRule::Dense { b }) => select_lambda_dense(b, l)?,
        };
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("regularization level must be finite and > 0, got {lambda}")));
        }
        Ok(lambda)
    }
}

/// When to leave the loop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopRule {
    /// `||(M_new - M_old) restricted to the unobserved set|| < lambda/3 + extra_tol`
    /// and `||M_new - M_old||_inf < a`.
    #[default]
    Dual,
    /// Stop once the clipped-iterate Frobenius change drops below `tol`.
    DeltaFrobenius { tol: f64 },
    /// Run exactly `max_iters` iterations.
    Never,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionConfig {
    pub lambda: LambdaChoice,
    /// Upper bound on the sup-norm of the target matrix.
    pub a: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub extra_tol: f64,
    /// Clip the returned estimate to `[-a, a]`.
    #[serde(default)]
    pub post_clip: bool,
    #[serde(default)]
    pub stop: StopRule,
    /// Initial iterate in place of zero; clipped before use.
    #[serde(skip)]
    pub warm_start: Option<DenseMatrix>,
}

fn default_max_iters() -> usize {
    DEFAULT_MAX_ITERS
}

impl CompletionConfig {
    pub fn new(lambda: LambdaChoice, a: f64) -> Self {
        Self {
            lambda,
            a,
            max_iters: DEFAULT_MAX_ITERS,
            extra_tol: 0.0,
            post_clip: false,
            stop: StopRule::Dual,
            warm_start: None,
        }
    }

    pub fn with_lambda(lambda: f64, a: f64) -> Self {
        Self::new(LambdaChoice::Value(lambda), a)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(invalid(format!("a must be finite and > 0, got {}", self.a)));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be >= 1"));
        }
        if !(self.extra_tol >= 0.0) {
            return Err(invalid(format!("extra_tol must be >= 0, got {}", self.extra_tol)));
        }
        if let StopRule::DeltaFrobenius { tol } = self.stop {
            if !(tol > 0.0) {
                return Err(invalid("frobenius stopping tolerance must be > 0"));
            }
        }
        Ok(())
    }
}

/// Per-iteration diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Operator norm of `M_new - M_old` restricted to the unobserved set.
    pub delta_opnorm_unobs: f64,
    /// `||M_new - M_old||_inf`.
    pub delta_sup: f64,
    /// `||clip(M_new) - M_old||_2`, the change of the clipped sequence.
    pub delta_fro: f64,
    /// Objective of the step's proximal problem at `M_new`.
    pub f_lambda: f64,
    /// `Q(clip(M_new), M_new)`.
    pub q_value: f64,
    pub rank: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// Largest increase between consecutive values of `field` (0 if none).
    pub fn max_increase(&self, field: impl Fn(&IterationRecord) -> f64) -> f64 {
        self.records
            .windows(2)
            .map(|w| field(&w[1]) - field(&w[0]))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct CompletionResult {
    pub estimate: DenseMatrix,
    pub iterations: usize,
    pub converged: bool,
    pub lambda: f64,
    pub trace: IterationTrace,
}

/// `Y` on the observed set, `m_old` elsewhere.
fn impute(obs: &ObservationSet, m_old: &DenseMatrix) -> DenseMatrix {
    let mut z = m_old.as_matrix().clone();
    for (i, j, v) in obs.triples() {
        z[(i, j)] = v;
    }
    DenseMatrix::from_inner(z)
}

fn check_shapes(obs: &ObservationSet, m: &DenseMatrix) -> Result<()> {
    ensure_same_shape(obs.shape(), m.shape())
}

/// One proximal step: `S_lambda(Y + (M_old) on the unobserved set)`.
pub fn impute_step(obs: &ObservationSet, m_old: &DenseMatrix, lambda: f64) -> Result<DenseMatrix> {
    check_shapes(obs, m_old)?;
    Ok(soft_threshold_full(&impute(obs, m_old), lambda)?.matrix)
}

/// Operator norm of `diff` on the complement of `mask`.
fn unobserved_opnorm(diff: &DenseMatrix, unobserved: &IndexSet) -> Result<f64> {
    if unobserved.is_empty() {
        return Ok(0.0);
    }
    operator_norm(&restrict(diff, unobserved)?)
}

/// The exit test. Equality on either condition means "continue".
pub fn stop_check(
    m_new: &DenseMatrix,
    m_old: &DenseMatrix,
    mask: &IndexSet,
    lambda: f64,
    a: f64,
    extra_tol: f64,
) -> Result<bool> {
    ensure_same_shape(m_new.shape(), m_old.shape())?;
    ensure_same_shape(m_new.shape(), mask.shape())?;
    let diff = m_new.sub(m_old)?;
    let op = unobserved_opnorm(&diff, &mask.complement())?;
    Ok(op < lambda / 3.0 + extra_tol && sup_norm(&diff) < a)
}

/// `1/2 ||Y + (M_old) on the unobserved set - M||_2^2 + lambda ||M||_*`.
pub fn objective_f(
    m: &DenseMatrix,
    obs: &ObservationSet,
    m_old: &DenseMatrix,
    lambda: f64,
) -> Result<f64> {
    check_shapes(obs, m)?;
    check_shapes(obs, m_old)?;
    let z = impute(obs, m_old);
    Ok(0.5 * z.sub(m)?.frobenius_sq() + lambda * nuclear_norm(m)?)
}

/// `1/2 ||(Y - B) on the observed set||^2 + 1/2 ||(A - B) elsewhere||^2 + lambda ||B||_*`.
pub fn q_value(a: &DenseMatrix, b: &DenseMatrix, obs: &ObservationSet, lambda: f64) -> Result<f64> {
    check_shapes(obs, a)?;
    check_shapes(obs, b)?;
    Ok(q_parts(a, b, obs) + lambda * nuclear_norm(b)?)
}

/// Quadratic part of `Q(A, B)`.
fn q_parts(a: &DenseMatrix, b: &DenseMatrix, obs: &ObservationSet) -> f64 {
    let (am, bm) = (a.as_matrix(), b.as_matrix());
    let mask = obs.mask();
    let mut observed = 0.0;
    for (i, j, y) in obs.triples() {
        observed += (y - bm[(i, j)]).powi(2);
    }
    let mut unobserved = 0.0;
    for i in 0..am.nrows() {
        for j in 0..am.ncols() {
            if !mask.contains(i, j) {
                unobserved += (am[(i, j)] - bm[(i, j)]).powi(2);
            }
        }
    }
    0.5 * (observed + unobserved)
}

/// `3 (3 sigma sqrt(2L) + c* b sqrt(2 log d))`.
pub fn select_lambda_general(sigma: f64, b: f64, l: f64, d: usize, c_star: f64) -> Result<f64> {
    if !(sigma >= 0.0 && b >= 0.0 && l >= 0.0 && c_star >= 0.0) {
        return Err(invalid("sigma, b, L and c* must be non-negative"));
    }
    if d < 2 {
        return Err(invalid(format!("d = m1 + m2 must be >= 2, got {d}")));
    }
    Ok(3.0 * (3.0 * sigma * (2.0 * l).sqrt() + c_star * b * (2.0 * (d as f64).ln()).sqrt()))
}

/// `18 b sqrt(2L)`.
pub fn select_lambda_dense(b: f64, l: f64) -> Result<f64> {
    if !(b > 0.0 && l > 0.0) {
        return Err(invalid(format!("dense rule needs b > 0 and L > 0, got b={b}, L={l}")));
    }
    Ok(18.0 * b * (2.0 * l).sqrt())
}

/// Runs the loop, estimating `L` from the observed row/column counts when
/// the regularization level comes from a rule.
pub fn run(obs: &ObservationSet, config: &CompletionConfig) -> Result<CompletionResult> {
    run_with_marginals(obs, config, &MarginalSummary::from_mask(obs.mask()))
}

/// Runs the loop with a known marginal bound for rule-based levels.
pub fn run_with_marginals(
    obs: &ObservationSet,
    config: &CompletionConfig,
    summary: &MarginalSummary,
) -> Result<CompletionResult> {
    let (m1, m2) = obs.shape();
    let lambda = config.lambda.resolve(summary.l, m1 + m2)?;
    run_with_lambda(obs, config, lambda)
}

pub fn run_with_lambda(
    obs: &ObservationSet,
    config: &CompletionConfig,
    lambda: f64,
) -> Result<CompletionResult> {
    config.validate()?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("regularization level must be finite and >= 0, got {lambda}")));
    }
    let (m1, m2) = obs.shape();
    let a = config.a;
    let unobserved = obs.mask().complement();

    let mut m_old = match &config.warm_start {
        Some(w) => {
            check_shapes(obs, w)?;
            clip(w, a)?
        }
        None => DenseMatrix::zeros(m1, m2)?,
    };
    let mut trace = IterationTrace::default();

    for iter in 1..=config.max_iters {
        let z = impute(obs, &m_old);
        let Thresholded {
            matrix: m_new,
            shrunk_values,
        } = soft_threshold_full(&z, lambda).map_err(non_finite_context)?;
        let nuclear: f64 = shrunk_values.iter().sum();
        let rank = shrunk_values.iter().filter(|&&d| d > crate::linalg::RANK_TOL).count();

        let diff = m_new.sub(&m_old)?;
        let delta_opnorm_unobs = unobserved_opnorm(&diff, &unobserved)?;
        let delta_sup = sup_norm(&diff);
        let m_next = clip(&m_new, a)?;
        let delta_fro = frobenius_norm(&m_next.sub(&m_old)?);
        let f_lambda = 0.5 * z.sub(&m_new)?.frobenius_sq() + lambda * nuclear;
        let q = q_parts(&m_next, &m_new, obs) + lambda * nuclear;
        if !(f_lambda.is_finite() && q.is_finite()) {
            return Err(Error::NonFinite("iteration diagnostics"));
        }

        trace.records.push(IterationRecord {
            iter,
            delta_opnorm_unobs,
            delta_sup,
            delta_fro,
            f_lambda,
            q_value: q,
            rank,
        });

        let stop = match config.stop {
            StopRule::Dual => {
                delta_opnorm_unobs < lambda / 3.0 + config.extra_tol && delta_sup < a
            }
            StopRule::DeltaFrobenius { tol } => delta_fro < tol,
            StopRule::Never => false,
        };
        let last = stop || iter == config.max_iters;
        if last {
            let estimate = if config.post_clip { m_next } else { m_new };
            return Ok(CompletionResult {
                estimate,
                iterations: iter,
                converged: stop,
                lambda,
                trace,
            });
        }
        m_old = m_next;
    }
    unreachable!("max_iters >= 1 is validated")
}

fn non_finite_context(e: Error) -> Error {
    match e {
        Error::NonFinite(_) => Error::NonFinite("soft-thresholded iterate"),
        other => other,
    }
}

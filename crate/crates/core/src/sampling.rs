//! Observation model: independent Bernoulli sampling of entries with
//! probabilities `pi_ij`, bounded zero-mean noise, marginal summaries and the
//! `L2(Pi)` weighted norm.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erf;

use crate::error::{invalid, Error, Result};
use crate::linalg::{ensure_same_shape, DenseMatrix, IndexSet};

/// Entrywise observation probabilities. Every probability lies in `(0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub enum SamplingModel {
    Uniform { rows: usize, cols: usize, p: f64 },
    General { probs: DenseMatrix },
}

impl SamplingModel {
    pub fn uniform(rows: usize, cols: usize, p: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyDimensions { rows, cols });
        }
        check_probability(p)?;
        Ok(Self::Uniform { rows, cols, p })
    }

    /// Arbitrary probabilities. Zero entries are rejected: the error bounds
    /// require a positive sampling floor `pi_ij >= p > 0`.
    pub fn general(probs: DenseMatrix) -> Result<Self> {
        for v in probs.as_matrix().iter() {
            if *v == 0.0 {
                return Err(invalid(
                    "probability 0 not allowed: every entry needs a positive chance of being observed",
                ));
            }
            check_probability(*v)?;
        }
        Ok(Self::General { probs })
    }

    /// Rows are sampled at one of two levels, `low * p` or `high * p`,
    /// mixed so the expected level is `p`. Requires `low < 1 < high`.
    pub fn row_tiered(
        rows: usize,
        cols: usize,
        p: f64,
        low: f64,
        high: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if !(low > 0.0 && low < 1.0 && high > 1.0) {
            return Err(invalid("row_tiered needs 0 < low < 1 < high"));
        }
        if high * p > 1.0 {
            return Err(invalid(format!("high level {high} * p = {} exceeds 1", high * p)));
        }
        // P(low) * low + (1 - P(low)) * high = 1
        let p_low = (high - 1.0) / (high - low);
        let levels: Vec<f64> = (0..rows)
            .map(|_| if rng.random_bool(p_low) { low * p } else { high * p })
            .collect();
        Self::general(DenseMatrix::from_fn(rows, cols, |i, _| levels[i])?)
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Self::Uniform { rows, cols, .. } => (*rows, *cols),
            Self::General { probs } => probs.shape(),
        }
    }

    pub fn prob(&self, i: usize, j: usize) -> f64 {
        match self {
            Self::Uniform { p, .. } => *p,
            Self::General { probs } => probs.get(i, j),
        }
    }

    /// Smallest probability, the sampling floor `p`.
    pub fn floor(&self) -> f64 {
        match self {
            Self::Uniform { p, .. } => *p,
            Self::General { probs } => probs.as_matrix().min(),
        }
    }

    pub fn ceiling(&self) -> f64 {
        match self {
            Self::Uniform { p, .. } => *p,
            Self::General { probs } => probs.as_matrix().max(),
        }
    }

    /// Expected number of observations `n = sum pi_ij`.
    pub fn expected_count(&self) -> f64 {
        match self {
            Self::Uniform { rows, cols, p } => p * (*rows * *cols) as f64,
            Self::General { probs } => probs.as_matrix().sum(),
        }
    }

    /// Whether every probability lies in `[mu_low * p, mu_high * p]`.
    pub fn within_band(&self, p: f64, mu_low: f64, mu_high: f64) -> bool {
        self.floor() >= mu_low * p && self.ceiling() <= mu_high * p
    }
}

fn check_probability(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid(format!("probability must lie in (0, 1], got {p}")));
    }
    Ok(())
}

/// Bounded, zero-mean entry noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    /// Uniform on `[-b, b]`, standard deviation `b / sqrt(3)`.
    UniformBounded { b: f64 },
    /// `+b` or `-b` with equal probability, standard deviation `b`.
    ScaledRademacher { b: f64 },
    /// Centered Gaussian truncated to `[-b, b]`, with the pre-truncation
    /// scale chosen so the truncated law has standard deviation `sigma`.
    TruncatedGaussian { sigma: f64, b: f64 },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::None => Ok(()),
            Self::UniformBounded { b } | Self::ScaledRademacher { b } => {
                if !(b > 0.0 && b.is_finite()) {
                    return Err(invalid(format!("noise bound must be finite and > 0, got {b}")));
                }
                Ok(())
            }
            Self::TruncatedGaussian { sigma, b } => {
                if !(b > 0.0 && b.is_finite()) {
                    return Err(invalid(format!("noise bound must be finite and > 0, got {b}")));
                }
                if !(sigma > 0.0) {
                    return Err(invalid(format!("truncated gaussian needs sigma > 0, got {sigma}")));
                }
                // A symmetric law on [-b, b] with a unimodal centered density
                // cannot exceed the uniform's standard deviation.
                if sigma >= b / 3f64.sqrt() {
                    return Err(invalid(format!(
                        "sigma {sigma} infeasible for a truncated gaussian bounded by {b} (needs sigma < b/sqrt(3))"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn sigma(&self) -> f64 {
        match *self {
            Self::None => 0.0,
            Self::UniformBounded { b } => b / 3f64.sqrt(),
            Self::ScaledRademacher { b } => b,
            Self::TruncatedGaussian { sigma, .. } => sigma,
        }
    }

    /// Sup bound `b`; zero for noiseless observations.
    pub fn bound(&self) -> f64 {
        match *self {
            Self::None => 0.0,
            Self::UniformBounded { b }
            | Self::ScaledRademacher { b }
            | Self::TruncatedGaussian { b, .. } => b,
        }
    }

    /// Prepares a sampler; fails if the parameters are invalid.
    pub fn sampler(&self) -> Result<NoiseSampler> {
        self.validate()?;
        let kind = match *self {
            Self::None => SamplerKind::Zero,
            Self::UniformBounded { b } => SamplerKind::Uniform(b),
            Self::ScaledRademacher { b } => SamplerKind::Rademacher(b),
            Self::TruncatedGaussian { sigma, b } => {
                let scale = truncated_gaussian_scale(sigma, b)?;
                let normal = Normal::new(0.0, scale).map_err(|e| invalid(e.to_string()))?;
                let lo = normal.cdf(-b);
                let hi = normal.cdf(b);
                SamplerKind::Truncated { normal, lo, hi, b }
            }
        };
        Ok(NoiseSampler(kind))
    }
}

#[derive(Clone, Debug)]
enum SamplerKind {
    Zero,
    Uniform(f64),
    Rademacher(f64),
    Truncated { normal: Normal, lo: f64, hi: f64, b: f64 },
}

/// Draws noise values; every value satisfies `|xi| <= b`.
#[derive(Clone, Debug)]
pub struct NoiseSampler(SamplerKind);

impl NoiseSampler {
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match &self.0 {
            SamplerKind::Zero => 0.0,
            SamplerKind::Uniform(b) => rng.random_range(-*b..=*b),
            SamplerKind::Rademacher(b) => {
                if rng.random_bool(0.5) {
                    *b
                } else {
                    -*b
                }
            }
            SamplerKind::Truncated { normal, lo, hi, b } => {
                let u: f64 = rng.random();
                let q = lo + u * (hi - lo);
                normal.inverse_cdf(q).clamp(-*b, *b)
            }
        }
    }
}

/// Standard deviation of `N(0, scale^2)` truncated to `[-b, b]`.
pub fn truncated_gaussian_sd(scale: f64, b: f64) -> f64 {
    let beta = b / scale;
    let pdf = (-0.5 * beta * beta).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mass = erf(beta / std::f64::consts::SQRT_2);
    scale * (1.0 - 2.0 * beta * pdf / mass).max(0.0).sqrt()
}

/// Pre-truncation scale whose truncation to `[-b, b]` has sd `sigma`.
fn truncated_gaussian_scale(sigma: f64, b: f64) -> Result<f64> {
    // The truncated sd increases monotonically in the scale towards b/sqrt(3).
    let (mut lo, mut hi) = (sigma * 0.5, sigma);
    while truncated_gaussian_sd(hi, b) < sigma {
        hi *= 2.0;
        if hi > 1e12 * b {
            return Err(invalid("truncated gaussian scale search diverged"));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if truncated_gaussian_sd(mid, b) < sigma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Realized observations `y_ij = m_ij + xi_ij` on the mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    mask: IndexSet,
    /// Row-major over mask members.
    values: Vec<f64>,
}

impl ObservationSet {
    pub fn new(mask: IndexSet, values: Vec<f64>) -> Result<Self> {
        if values.len() != mask.len() {
            return Err(invalid(format!(
                "{} values for {} mask members",
                values.len(),
                mask.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation values"));
        }
        Ok(Self { mask, values })
    }

    /// Builds from `(row, col, value)` triples in any order.
    pub fn from_triples(
        rows: usize,
        cols: usize,
        triples: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut mask = IndexSet::empty(rows, cols)?;
        let mut dense = vec![0.0; rows * cols];
        for (i, j, v) in triples {
            if !mask.insert(i, j)? {
                return Err(invalid(format!("entry ({i}, {j}) observed twice")));
            }
            dense[i * cols + j] = v;
        }
        let values = mask.iter().map(|(i, j)| dense[i * cols + j]).collect();
        Self::new(mask, values)
    }

    pub fn mask(&self) -> &IndexSet {
        &self.mask
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> usize {
        self.mask.rows()
    }

    pub fn cols(&self) -> usize {
        self.mask.cols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mask.shape()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(row, col, value)` in row-major order.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.mask.iter().zip(&self.values).map(|((i, j), &v)| (i, j, v))
    }

    /// The zero-filled observation matrix `Y`.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = nalgebra::DMatrix::zeros(self.rows(), self.cols());
        for (i, j, v) in self.triples() {
            m[(i, j)] = v;
        }
        DenseMatrix::from_inner(m)
    }
}

/// Includes each position independently with probability `pi_ij`.
pub fn draw_mask(model: &SamplingModel, rng: &mut impl Rng) -> IndexSet {
    let (rows, cols) = model.shape();
    let mut bits = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let u: f64 = rng.random();
            bits.push(u < model.prob(i, j));
        }
    }
    IndexSet::from_bitmap(rows, cols, bits)
}

/// Observes `m0 + noise` on the mask, drawing noise per member in row-major order.
pub fn observe(
    m0: &DenseMatrix,
    noise: &NoiseModel,
    mask: &IndexSet,
    rng: &mut impl Rng,
) -> Result<ObservationSet> {
    ensure_same_shape(m0.shape(), mask.shape())?;
    let sampler = noise.sampler()?;
    let values = mask
        .iter()
        .map(|(i, j)| m0.get(i, j) + sampler.sample(rng))
        .collect();
    ObservationSet::new(mask.clone(), values)
}

/// `||A||^2_{L2(Pi)} = sum pi_ij A_ij^2`.
pub fn weighted_norm_sq(a: &DenseMatrix, model: &SamplingModel) -> Result<f64> {
    ensure_same_shape(model.shape(), a.shape())?;
    Ok(match model {
        SamplingModel::Uniform { p, .. } => p * a.frobenius_sq(),
        SamplingModel::General { probs } => a
            .as_matrix()
            .iter()
            .zip(probs.as_matrix().iter())
            .map(|(x, w)| w * x * x)
            .sum(),
    })
}

/// Row and column sums of the probabilities and their maximum `L`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginalSummary {
    pub row_marginals: Vec<f64>,
    pub col_marginals: Vec<f64>,
    pub l: f64,
}

impl MarginalSummary {
    fn from_parts(row_marginals: Vec<f64>, col_marginals: Vec<f64>) -> Self {
        let l = row_marginals
            .iter()
            .chain(&col_marginals)
            .copied()
            .fold(0.0, f64::max);
        Self {
            row_marginals,
            col_marginals,
            l,
        }
    }

    /// Observed row and column counts of a mask, the plug-in estimate of
    /// the marginals when the sampling probabilities are unknown.
    pub fn from_mask(mask: &IndexSet) -> Self {
        let mut rows = vec![0.0; mask.rows()];
        let mut cols = vec![0.0; mask.cols()];
        for (i, j) in mask.iter() {
            rows[i] += 1.0;
            cols[j] += 1.0;
        }
        Self::from_parts(rows, cols)
    }

    pub fn min_marginal(&self) -> f64 {
        self.row_marginals
            .iter()
            .chain(&self.col_marginals)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn marginals(model: &SamplingModel) -> MarginalSummary {
    match model {
        SamplingModel::Uniform { rows, cols, p } => MarginalSummary::from_parts(
            vec![p * *cols as f64; *rows],
            vec![p * *rows as f64; *cols],
        ),
        SamplingModel::General { probs } => {
            let m = probs.as_matrix();
            let rows = m.row_iter().map(|r| r.sum()).collect();
            let cols = m.column_iter().map(|c| c.sum()).collect();
            MarginalSummary::from_parts(rows, cols)
        }
    }
}

/// Empirical row and column frequencies, each summing to one.
pub fn empirical_marginals(mask: &IndexSet) -> Result<(Vec<f64>, Vec<f64>)> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let total = mask.len() as f64;
    let counts = MarginalSummary::from_mask(mask);
    Ok((
        counts.row_marginals.iter().map(|c| c / total).collect(),
        counts.col_marginals.iter().map(|c| c / total).collect(),
    ))
}

/// Advisory sample-size check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub expected_n: f64,
    /// `c * r * max(m1, m2)`.
    pub threshold: f64,
    pub feasible: bool,
    /// `c_dense * min(m1, m2) * log(m1 + m2)`.
    pub dense_threshold: f64,
    pub dense_regime: bool,
}

/// Compares `n = sum pi_ij` against `c r M` and against the dense-regime
/// level `c_dense m log d`.
pub fn feasibility_check(
    r: usize,
    model: &SamplingModel,
    c: f64,
    c_dense: f64,
) -> Result<FeasibilityReport> {
    if r == 0 {
        return Err(invalid("rank must be >= 1"));
    }
    let (m1, m2) = model.shape();
    let expected_n = model.expected_count();
    let threshold = c * r as f64 * m1.max(m2) as f64;
    let dense_threshold = c_dense * m1.min(m2) as f64 * ((m1 + m2) as f64).ln();
    Ok(FeasibilityReport {
        expected_n,
        threshold,
        feasible: expected_n >= threshold,
        dense_threshold,
        dense_regime: expected_n > dense_threshold,
    })
}

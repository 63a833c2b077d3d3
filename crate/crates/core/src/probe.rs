//! Monte Carlo probes of the stochastic terms that drive the choice of the
//! regularization level, the packing-set construction behind the minimax
//! lower bound, and a one-step hard-thresholding baseline.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::linalg::{clip, operator_norm, svd, DenseMatrix};
use crate::rng::{derive_seed, seeded};
use crate::sampling::{draw_mask, marginals, NoiseModel, ObservationSet, SamplingModel};

/// One draw of the noise-on-mask matrix and its Rademacher counterpart.
#[derive(Clone, Debug)]
pub struct StochasticTermSample {
    /// `eta_ij * xi_ij`.
    pub sigma_matrix: DenseMatrix,
    /// `eta_ij * eps_ij` with fresh Rademacher signs on the same mask.
    pub sigma_r_matrix: DenseMatrix,
    pub opnorm_sigma: f64,
    pub opnorm_sigma_r: f64,
}

pub fn sample_sigma(
    model: &SamplingModel,
    noise: &NoiseModel,
    rng: &mut impl Rng,
) -> Result<StochasticTermSample> {
    let sampler = noise.sampler()?;
    let (m1, m2) = model.shape();
    let mask = draw_mask(model, rng);
    let mut sigma = DMatrix::zeros(m1, m2);
    for (i, j) in mask.iter() {
        sigma[(i, j)] = sampler.sample(rng);
    }
    let mut sigma_r = DMatrix::zeros(m1, m2);
    for (i, j) in mask.iter() {
        sigma_r[(i, j)] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    }
    let sigma_matrix = DenseMatrix::try_from(sigma)?;
    let sigma_r_matrix = DenseMatrix::try_from(sigma_r)?;
    Ok(StochasticTermSample {
        opnorm_sigma: operator_norm(&sigma_matrix)?,
        opnorm_sigma_r: operator_norm(&sigma_r_matrix)?,
        sigma_matrix,
        sigma_r_matrix,
    })
}

/// Probe summary in the JSON layout written by the CLI.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ProbeReport {
    pub reps: usize,
    pub bound: Option<f64>,
    pub violations: Option<usize>,
    pub mean_opnorm: f64,
    pub ratio_to_bound: Option<f64>,
    pub calibrated_constant: Option<f64>,
    pub quantile_99: f64,
}

/// Operator norms of `reps` independent noise-on-mask draws, with the
/// deviation bound `3 sigma sqrt(2L) + c* b t`.
#[derive(Clone, Debug)]
pub struct SigmaBoundCheck {
    pub opnorms: Vec<f64>,
    pub sigma: f64,
    pub b: f64,
    pub l: f64,
    pub t: f64,
    pub c_star: f64,
}

impl SigmaBoundCheck {
    pub fn bound_at(&self, c_star: f64) -> f64 {
        3.0 * self.sigma * (2.0 * self.l).sqrt() + c_star * self.b * self.t
    }

    pub fn bound(&self) -> f64 {
        self.bound_at(self.c_star)
    }

    pub fn violations_at(&self, c_star: f64) -> usize {
        let bound = self.bound_at(c_star);
        self.opnorms.iter().filter(|&&x| x > bound).count()
    }

    pub fn violations(&self) -> usize {
        self.violations_at(self.c_star)
    }

    /// Smallest `c*` with no violations on this sample set.
    pub fn calibrated_c_star(&self) -> f64 {
        let base = 3.0 * self.sigma * (2.0 * self.l).sqrt();
        let worst = self.opnorms.iter().copied().fold(0.0, f64::max);
        let excess = (worst - base).max(0.0);
        if excess == 0.0 {
            0.0
        } else if self.b * self.t == 0.0 {
            f64::INFINITY
        } else {
            excess / (self.b * self.t)
        }
    }

    pub fn report(&self) -> ProbeReport {
        let calibrated = self.calibrated_c_star();
        ProbeReport {
            reps: self.opnorms.len(),
            bound: Some(self.bound()),
            violations: Some(self.violations()),
            mean_opnorm: mean(&self.opnorms),
            ratio_to_bound: Some(mean(&self.opnorms) / self.bound()).filter(|r| r.is_finite()),
            calibrated_constant: calibrated.is_finite().then_some(calibrated),
            quantile_99: quantile(&self.opnorms, 0.99),
        }
    }
}

pub fn check_sigma_bound(
    model: &SamplingModel,
    noise: &NoiseModel,
    t: f64,
    c_star: f64,
    reps: usize,
    rng: &mut impl Rng,
) -> Result<SigmaBoundCheck> {
    if reps == 0 {
        return Err(invalid("reps must be >= 1"));
    }
    if !(t > 0.0) {
        return Err(invalid(format!("t must be > 0, got {t}")));
    }
    noise.validate()?;
    let base: u64 = rng.random();
    let opnorms = (0..reps)
        .into_par_iter()
        .map(|k| {
            let mut rep_rng = seeded(derive_seed(base, &[k as u64]));
            sample_sigma(model, noise, &mut rep_rng).map(|s| s.opnorm_sigma)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SigmaBoundCheck {
        opnorms,
        sigma: noise.sigma(),
        b: noise.bound(),
        l: marginals(model).l,
        t,
        c_star,
    })
}

/// Monte Carlo mean of the Rademacher-on-mask operator norm against
/// `sqrt(L) + sqrt(log m)`.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SigmaRReport {
    pub reps: usize,
    pub mean_opnorm: f64,
    pub scale: f64,
    pub ratio_to_bound: f64,
}

impl SigmaRReport {
    pub fn report(&self) -> ProbeReport {
        ProbeReport {
            reps: self.reps,
            bound: Some(self.scale),
            violations: None,
            mean_opnorm: self.mean_opnorm,
            ratio_to_bound: Some(self.ratio_to_bound),
            calibrated_constant: Some(self.ratio_to_bound),
            quantile_99: f64::NAN,
        }
    }
}

pub fn estimate_expected_sigma_r(
    model: &SamplingModel,
    reps: usize,
    rng: &mut impl Rng,
) -> Result<SigmaRReport> {
    if reps < 30 {
        return Err(invalid(format!("need at least 30 replicates, got {reps}")));
    }
    let base: u64 = rng.random();
    let norms = (0..reps)
        .into_par_iter()
        .map(|k| {
            let mut rep_rng = seeded(derive_seed(base, &[k as u64]));
            sample_sigma(model, &NoiseModel::None, &mut rep_rng).map(|s| s.opnorm_sigma_r)
        })
        .collect::<Result<Vec<_>>>()?;
    let (m1, m2) = model.shape();
    let scale = marginals(model).l.sqrt() + (m1.min(m2) as f64).ln().sqrt();
    let mean_opnorm = mean(&norms);
    Ok(SigmaRReport {
        reps,
        mean_opnorm,
        scale,
        ratio_to_bound: mean_opnorm / scale,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Nearest-rank quantile.
fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[k - 1]
}

/// A family of rank-`r`, sup-bounded, pairwise separated matrices.
#[derive(Clone, Debug)]
pub struct PackingSet {
    /// The zero matrix comes first.
    pub members: Vec<DenseMatrix>,
    pub r: usize,
    pub a: f64,
    pub gamma: f64,
    /// Guaranteed lower bound on every pairwise squared Frobenius distance.
    pub separation: f64,
    /// The non-zero entry value.
    pub entry_value: f64,
    /// How many members short of the requested count.
    pub shortfall: usize,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct PackingManifest {
    pub r: usize,
    pub a: f64,
    pub gamma: f64,
    pub separation: f64,
    pub count: usize,
    pub shortfall: usize,
}

impl PackingSet {
    pub fn manifest(&self) -> PackingManifest {
        PackingManifest {
            r: self.r,
            a: self.a,
            gamma: self.gamma,
            separation: self.separation,
            count: self.members.len(),
            shortfall: self.shortfall,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PackingParams {
    pub m1: usize,
    pub m2: usize,
    pub r: usize,
    pub p: f64,
    pub sigma: f64,
    pub a: f64,
    pub gamma: f64,
    pub target_count: usize,
    /// Rejected candidates allowed per requested member.
    pub retries_per_member: usize,
}

impl PackingParams {
    pub fn new(m1: usize, m2: usize, r: usize, p: f64, sigma: f64, a: f64, gamma: f64, target_count: usize) -> Self {
        Self {
            m1,
            m2,
            r,
            p,
            sigma,
            a,
            gamma,
            target_count,
            retries_per_member: 1000,
        }
    }

    /// `gamma (sigma ^ a) sqrt(r / (p m))`.
    pub fn entry_value(&self) -> f64 {
        let m = self.m1.min(self.m2) as f64;
        self.gamma * self.sigma.min(self.a) * (self.r as f64 / (self.p * m)).sqrt()
    }

    /// `(gamma^2 / 16) (sigma ^ a)^2 m1 m2 r / (p m)`.
    pub fn separation(&self) -> f64 {
        let m = self.m1.min(self.m2) as f64;
        let s = self.sigma.min(self.a);
        self.gamma * self.gamma / 16.0 * s * s * (self.m1 * self.m2) as f64 * self.r as f64
            / (self.p * m)
    }

    fn validate(&self) -> Result<()> {
        let m = self.m1.min(self.m2);
        if m == 0 {
            return Err(Error::EmptyDimensions { rows: self.m1, cols: self.m2 });
        }
        if self.r == 0 || self.r > m {
            return Err(invalid(format!("rank {} outside 1..={m}", self.r)));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(invalid(format!("p must lie in (0, 1], got {}", self.p)));
        }
        if self.p * (m as f64) < self.r as f64 {
            return Err(invalid(format!(
                "need p >= r/m = {}, got {}",
                self.r as f64 / m as f64,
                self.p
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(invalid(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.sigma > 0.0 && self.a > 0.0) {
            return Err(invalid("sigma and a must be > 0"));
        }
        if self.target_count < 2 {
            return Err(invalid("target_count must be >= 2"));
        }
        Ok(())
    }
}

/// Zero matrix plus randomly drawn block matrices `(L | L | ... | L | 0)`
/// whose `r`-column base block has entries in `{0, v}`. Candidates are kept
/// only if they clear the separation against every accepted member. When
/// `m1 < m2` the construction is built for the transpose.
pub fn build_packing_set(params: &PackingParams, rng: &mut impl Rng) -> Result<PackingSet> {
    params.validate()?;
    let entry_value = params.entry_value();
    if entry_value > params.a * (1.0 + 1e-12) {
        return Err(invalid(format!(
            "entry value {entry_value} exceeds the sup bound {}",
            params.a
        )));
    }
    let entry_value = entry_value.min(params.a);
    let separation = params.separation();

    let transposed = params.m1 < params.m2;
    let (tall, wide) = if transposed {
        (params.m2, params.m1)
    } else {
        (params.m1, params.m2)
    };
    let r = params.r;
    let copies = (wide / (2 * r)).max(1);

    let build = |bits: &[bool]| -> DenseMatrix {
        let m = DMatrix::from_fn(tall, wide, |i, j| {
            let block = j / r;
            if block < copies && bits[i * r + j % r] {
                entry_value
            } else {
                0.0
            }
        });
        let m = if transposed { m.transpose() } else { m };
        DenseMatrix::from_inner(m)
    };

    let mut members = vec![DenseMatrix::zeros(params.m1, params.m2)?];
    let budget = params.retries_per_member.saturating_mul(params.target_count);
    let mut attempts = 0;
    while members.len() < params.target_count && attempts < budget {
        attempts += 1;
        let bits: Vec<bool> = (0..tall * r).map(|_| rng.random_bool(0.5)).collect();
        let candidate = build(&bits);
        let separated = members.iter().all(|m| {
            candidate
                .sub(m)
                .map(|d| d.frobenius_sq() >= separation)
                .unwrap_or(false)
        });
        if separated {
            members.push(candidate);
        }
    }
    let shortfall = params.target_count - members.len();
    Ok(PackingSet {
        members,
        r,
        a: params.a,
        gamma: params.gamma,
        separation,
        entry_value,
        shortfall,
    })
}

/// One-step universal singular value thresholding: hard-threshold the
/// zero-filled observations at `eta sqrt(max(m1, m2) p_hat)`, rescale by
/// `1 / p_hat`, and clip to `[-a, a]`.
pub fn usvt_baseline(obs: &ObservationSet, a: f64, eta: f64) -> Result<DenseMatrix> {
    if obs.is_empty() {
        return Err(Error::EmptyMask);
    }
    if !(eta >= 0.0) {
        return Err(invalid(format!("eta must be >= 0, got {eta}")));
    }
    let (m1, m2) = obs.shape();
    let p_hat = obs.len() as f64 / (m1 * m2) as f64;
    let threshold = eta * (m1.max(m2) as f64 * p_hat).sqrt();
    let factors = svd(&obs.to_dense())?;
    let kept: Vec<f64> = factors
        .singular_values
        .iter()
        .map(|&d| if d > threshold { d / p_hat } else { 0.0 })
        .collect();
    let est = DenseMatrix::try_from(factors.recompose_with(&kept))?;
    clip(&est, a)
}

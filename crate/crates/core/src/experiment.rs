//! Simulation harness: ground-truth generation, completion trials over a
//! `(rank, p)` grid, log-log rate fits and report files.
//!
//! Grid choices and acceptance bands used with this harness are its own
//! protocol, not reported values.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{sup_norm, DenseMatrix};
use crate::probe::usvt_baseline;
use crate::rng::{derive_seed, seeded};
use crate::sampling::{
    draw_mask, feasibility_check, marginals, observe, weighted_norm_sq, FeasibilityReport,
    NoiseModel, SamplingModel,
};
use crate::svt::{run_with_lambda, CompletionConfig, LambdaChoice, StopRule, DEFAULT_MAX_ITERS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Svt,
    Usvt,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Self::Svt => "svt",
            Self::Usvt => "usvt",
        }
    }
}

/// A full simulation grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dims: (usize, usize),
    pub rank_grid: Vec<usize>,
    pub p_grid: Vec<f64>,
    pub noise: NoiseModel,
    pub a: f64,
    pub lambda_rule: LambdaChoice,
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Estimator>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Threshold multiplier for the USVT baseline; defaults to
    /// `2.01 (a + b)`, the standard `2 + eta` rule rescaled to the
    /// observation range.
    #[serde(default)]
    pub usvt_eta: Option<f64>,
}

fn default_estimators() -> Vec<Estimator> {
    vec![Estimator::Svt]
}

fn default_max_iters() -> usize {
    DEFAULT_MAX_ITERS
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let (m1, m2) = self.dims;
        if m1 == 0 || m2 == 0 {
            return Err(Error::EmptyDimensions { rows: m1, cols: m2 });
        }
        if self.rank_grid.is_empty() || self.p_grid.is_empty() {
            return Err(invalid("rank_grid and p_grid must be non-empty"));
        }
        if let Some(&r) = self.rank_grid.iter().find(|&&r| r == 0 || r > m1.min(m2)) {
            return Err(invalid(format!("rank {r} outside 1..={}", m1.min(m2))));
        }
        if let Some(&p) = self.p_grid.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
            return Err(invalid(format!("p = {p} outside (0, 1]")));
        }
        if self.replicates == 0 {
            return Err(invalid("replicates must be >= 1"));
        }
        if !(self.a > 0.0) {
            return Err(invalid("a must be > 0"));
        }
        if self.estimators.is_empty() {
            return Err(invalid("no estimators selected"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be >= 1"));
        }
        self.noise.validate()
    }

    fn eta(&self) -> f64 {
        self.usvt_eta
            .unwrap_or(2.01 * (self.a + self.noise.bound()))
    }

    /// Seed for the ground truth of `(rank, replicate)`; shared across the
    /// `p` axis so the sampling rate is the only thing that changes.
    pub fn truth_seed(&self, r: usize, replicate: usize) -> u64 {
        derive_seed(self.seed, &[0, r as u64, replicate as u64])
    }

    /// Seed for the mask and noise of one grid point.
    pub fn trial_seed(&self, r: usize, p: f64, replicate: usize) -> u64 {
        derive_seed(self.seed, &[1, r as u64, p.to_bits(), replicate as u64])
    }
}

/// `G1 G2^T` with standard normal factors, rescaled to sup-norm exactly `a`.
pub fn generate_low_rank(
    m1: usize,
    m2: usize,
    r: usize,
    a: f64,
    rng: &mut impl Rng,
) -> Result<DenseMatrix> {
    if m1 == 0 || m2 == 0 {
        return Err(Error::EmptyDimensions { rows: m1, cols: m2 });
    }
    if r == 0 || r > m1.min(m2) {
        return Err(invalid(format!("rank {r} outside 1..={}", m1.min(m2))));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(invalid(format!("a must be finite and > 0, got {a}")));
    }
    let g1 = DMatrix::<f64>::from_fn(m1, r, |_, _| rng.sample(StandardNormal));
    let g2 = DMatrix::<f64>::from_fn(m2, r, |_, _| rng.sample(StandardNormal));
    let mut m = &g1 * g2.transpose();
    let peak = m.iamax_full();
    let top = m[peak].abs();
    if top == 0.0 {
        return Err(invalid("degenerate ground truth draw"));
    }
    let scale = a / top;
    m.apply(|v| *v = (*v * scale).clamp(-a, a));
    m[peak] = a.copysign(m[peak]);
    let out = DenseMatrix::try_from(m)?;
    debug_assert_eq!(sup_norm(&out), a);
    Ok(out)
}

/// One estimator's outcome at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub r: usize,
    pub p: f64,
    pub replicate: usize,
    pub estimator: Estimator,
    /// `||M_hat - M0||_2^2 / (m1 m2)`.
    pub mse: f64,
    /// `||M_hat - M0||^2_{L2(Pi)}`.
    pub weighted_err: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Kept out of the records CSV so reports are reproducible byte for byte.
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Inputs shared by every estimator at one grid point.
pub struct TrialSetup<'a> {
    pub m0: &'a DenseMatrix,
    pub model: &'a SamplingModel,
    pub noise: &'a NoiseModel,
    pub a: f64,
    pub lambda: LambdaChoice,
    pub estimators: &'a [Estimator],
    pub max_iters: usize,
    pub usvt_eta: f64,
}

/// Draws mask and noise, runs every estimator and scores it against `m0`.
/// The regularization level uses the true marginal bound of `model` and the
/// declared noise parameters.
pub fn run_trial_on(
    setup: &TrialSetup<'_>,
    rng: &mut impl Rng,
) -> Result<Vec<(Estimator, EstimatorOutcome)>> {
    let (m1, m2) = setup.m0.shape();
    let mask = draw_mask(setup.model, rng);
    let obs = observe(setup.m0, setup.noise, &mask, rng)?;
    let mut out = Vec::with_capacity(setup.estimators.len());
    for &est in setup.estimators {
        let start = Instant::now();
        let (estimate, iterations, converged) = match est {
            Estimator::Svt => {
                let lambda = setup.lambda.resolve(marginals(setup.model).l, m1 + m2)?;
                let mut cfg = CompletionConfig::new(LambdaChoice::Value(lambda), setup.a);
                cfg.max_iters = setup.max_iters;
                cfg.stop = StopRule::Dual;
                let res = run_with_lambda(&obs, &cfg, lambda)?;
                (res.estimate, res.iterations, res.converged)
            }
            Estimator::Usvt => {
                if obs.is_empty() {
                    (DenseMatrix::zeros(m1, m2)?, 1, true)
                } else {
                    (usvt_baseline(&obs, setup.a, setup.usvt_eta)?, 1, true)
                }
            }
        };
        let wall_time = start.elapsed();
        let err = estimate.sub(setup.m0)?;
        out.push((
            est,
            EstimatorOutcome {
                mse: err.frobenius_sq() / (m1 * m2) as f64,
                weighted_err: weighted_norm_sq(&err, setup.model)?,
                iterations,
                converged,
                wall_time,
            },
        ));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorOutcome {
    pub mse: f64,
    pub weighted_err: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time: Duration,
}

/// Runs one `(r, p, replicate)` point of `spec` with its derived seeds.
pub fn run_trial(spec: &ExperimentSpec, r: usize, p: f64, replicate: usize) -> Result<Vec<TrialRecord>> {
    let context = |source: Error| Error::Trial {
        r,
        p,
        replicate,
        seed: spec.seed,
        source: Box::new(source),
    };
    let (m1, m2) = spec.dims;
    let m0 = generate_low_rank(m1, m2, r, spec.a, &mut seeded(spec.truth_seed(r, replicate)))
        .map_err(context)?;
    let model = SamplingModel::uniform(m1, m2, p).map_err(context)?;
    let setup = TrialSetup {
        m0: &m0,
        model: &model,
        noise: &spec.noise,
        a: spec.a,
        lambda: spec.lambda_rule,
        estimators: &spec.estimators,
        max_iters: spec.max_iters,
        usvt_eta: spec.eta(),
    };
    let mut rng = seeded(spec.trial_seed(r, p, replicate));
    let outcomes = run_trial_on(&setup, &mut rng).map_err(context)?;
    Ok(outcomes
        .into_iter()
        .map(|(estimator, o)| TrialRecord {
            r,
            p,
            replicate,
            estimator,
            mse: o.mse,
            weighted_err: o.weighted_err,
            iterations: o.iterations,
            converged: o.converged,
            wall_time: o.wall_time,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialFailure {
    pub r: usize,
    pub p: f64,
    pub replicate: usize,
    pub message: String,
}

/// Least-squares fit of `log(median mse)` against `log` of one grid axis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub estimator: Estimator,
    /// `"p"` or `"r"`.
    pub axis: String,
    /// Value of the other axis held fixed.
    pub fixed: f64,
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridMedian {
    pub r: usize,
    pub p: f64,
    pub estimator: Estimator,
    pub median_mse: f64,
    pub median_weighted_err: f64,
    pub count: usize,
}

#[derive(Clone, Debug)]
pub struct ReportBundle {
    /// Sorted by `(r, p, replicate, estimator)`.
    pub records: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
    pub feasibility: Vec<(usize, f64, FeasibilityReport)>,
    pub medians: Vec<GridMedian>,
    pub slope_fits: Vec<SlopeFit>,
}

impl ReportBundle {
    pub fn median(&self, r: usize, p: f64, estimator: Estimator) -> Option<&GridMedian> {
        self.medians
            .iter()
            .find(|g| g.r == r && g.p == p && g.estimator == estimator)
    }

    pub fn slope(&self, axis: &str, estimator: Estimator) -> Option<&SlopeFit> {
        self.slope_fits
            .iter()
            .find(|f| f.axis == axis && f.estimator == estimator)
    }
}

/// Runs every `(r, p, replicate)` combination in parallel and fits rates.
pub fn scaling_study(spec: &ExperimentSpec) -> Result<ReportBundle> {
    spec.validate()?;
    let (m1, m2) = spec.dims;
    let mut points = Vec::new();
    for &r in &spec.rank_grid {
        for &p in &spec.p_grid {
            for k in 0..spec.replicates {
                points.push((r, p, k));
            }
        }
    }
    let results: Vec<_> = points
        .par_iter()
        .map(|&(r, p, k)| (r, p, k, run_trial(spec, r, p, k)))
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (r, p, replicate, res) in results {
        match res {
            Ok(recs) => records.extend(recs),
            Err(e) => failures.push(TrialFailure {
                r,
                p,
                replicate,
                message: e.to_string(),
            }),
        }
    }
    records.sort_by(|x, y| {
        (x.r, x.p, x.replicate, x.estimator)
            .partial_cmp(&(y.r, y.p, y.replicate, y.estimator))
            .expect("grid values are finite")
    });

    let mut feasibility = Vec::new();
    for &r in &spec.rank_grid {
        for &p in &spec.p_grid {
            let model = SamplingModel::uniform(m1, m2, p)?;
            feasibility.push((r, p, feasibility_check(r, &model, 1.0, 1.0)?));
        }
    }

    let medians = grid_medians(&records, spec);
    let slope_fits = fit_slopes(&medians, spec);
    Ok(ReportBundle {
        records,
        failures,
        feasibility,
        medians,
        slope_fits,
    })
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn grid_medians(records: &[TrialRecord], spec: &ExperimentSpec) -> Vec<GridMedian> {
    let mut out = Vec::new();
    for &estimator in &spec.estimators {
        for &r in &spec.rank_grid {
            for &p in &spec.p_grid {
                let cell: Vec<&TrialRecord> = records
                    .iter()
                    .filter(|t| t.r == r && t.p == p && t.estimator == estimator)
                    .collect();
                if cell.is_empty() {
                    continue;
                }
                let mut mse: Vec<f64> = cell.iter().map(|t| t.mse).collect();
                let mut werr: Vec<f64> = cell.iter().map(|t| t.weighted_err).collect();
                out.push(GridMedian {
                    r,
                    p,
                    estimator,
                    median_mse: median(&mut mse),
                    median_weighted_err: median(&mut werr),
                    count: cell.len(),
                });
            }
        }
    }
    out
}

/// Ordinary least squares `y = intercept + slope x`; `None` below 3 points.
pub fn ols(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let n = xs.len();
    if n < 3 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let stderr = (ssr / (nf - 2.0) / sxx).sqrt();
    Some((slope, intercept, stderr))
}

fn fit_slopes(medians: &[GridMedian], spec: &ExperimentSpec) -> Vec<SlopeFit> {
    let mut fits = Vec::new();
    for &estimator in &spec.estimators {
        let cells = |pred: &dyn Fn(&GridMedian) -> bool| -> Vec<&GridMedian> {
            medians
                .iter()
                .filter(|g| g.estimator == estimator && g.median_mse > 0.0 && pred(g))
                .collect()
        };
        for &r in &spec.rank_grid {
            let line = cells(&|g| g.r == r);
            let xs: Vec<f64> = line.iter().map(|g| g.p.ln()).collect();
            let ys: Vec<f64> = line.iter().map(|g| g.median_mse.ln()).collect();
            if let Some((slope, intercept, stderr)) = ols(&xs, &ys) {
                fits.push(SlopeFit {
                    estimator,
                    axis: "p".into(),
                    fixed: r as f64,
                    slope,
                    intercept,
                    stderr,
                    points: xs.len(),
                });
            }
        }
        for &p in &spec.p_grid {
            let line = cells(&|g| g.p == p);
            let xs: Vec<f64> = line.iter().map(|g| (g.r as f64).ln()).collect();
            let ys: Vec<f64> = line.iter().map(|g| g.median_mse.ln()).collect();
            if let Some((slope, intercept, stderr)) = ols(&xs, &ys) {
                fits.push(SlopeFit {
                    estimator,
                    axis: "r".into(),
                    fixed: p,
                    slope,
                    intercept,
                    stderr,
                    points: xs.len(),
                });
            }
        }
    }
    fits
}

#[derive(Serialize)]
struct Summary<'a> {
    protocol: &'static str,
    slope_fits: &'a [SlopeFit],
    medians: &'a [GridMedian],
    failures: &'a [TrialFailure],
    feasibility: Vec<FeasibilityEntry<'a>>,
}

#[derive(Serialize)]
struct FeasibilityEntry<'a> {
    r: usize,
    p: f64,
    #[serde(flatten)]
    report: &'a FeasibilityReport,
}

#[derive(Serialize)]
struct TimingRow {
    r: usize,
    p: f64,
    replicate: usize,
    estimator: Estimator,
    wall_time_secs: f64,
}

pub const RECORDS_FILE: &str = "records.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Writes `records.csv`, `timings.csv` and `summary.json` into `dir`.
pub fn emit_report(bundle: &ReportBundle, dir: &Path) -> Result<()> {
    if bundle.records.is_empty() {
        return Err(invalid("report has no records"));
    }
    fs::create_dir_all(dir)?;
    write_records(&bundle.records, &dir.join(RECORDS_FILE))?;

    let mut timings = csv::Writer::from_path(dir.join(TIMINGS_FILE))?;
    for t in &bundle.records {
        timings.serialize(TimingRow {
            r: t.r,
            p: t.p,
            replicate: t.replicate,
            estimator: t.estimator,
            wall_time_secs: t.wall_time.as_secs_f64(),
        })?;
    }
    timings.flush()?;

    let summary = Summary {
        protocol: "grid, replicate counts and acceptance bands are this harness's own protocol",
        slope_fits: &bundle.slope_fits,
        medians: &bundle.medians,
        failures: &bundle.failures,
        feasibility: bundle
            .feasibility
            .iter()
            .map(|(r, p, report)| FeasibilityEntry { r: *r, p: *p, report })
            .collect(),
    };
    fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

pub fn write_records(records: &[TrialRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for rec in records {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a records CSV; wall times are not stored and come back as zero.
pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::svd;
    use crate::svt::LambdaRule;

    fn tiny_spec() -> ExperimentSpec {
        ExperimentSpec {
            dims: (12, 10),
            rank_grid: vec![1, 2],
            p_grid: vec![0.5, 0.7, 0.9],
            noise: NoiseModel::ScaledRademacher { b: 0.01 },
            a: 1.0,
            lambda_rule: LambdaChoice::Rule(LambdaRule::Dense { b: 0.01 }),
            replicates: 3,
            seed: 42,
            estimators: vec![Estimator::Svt, Estimator::Usvt],
            max_iters: 500,
            usvt_eta: None,
        }
    }

    #[test]
    fn low_rank_sup_norm_is_exact() {
        let mut rng = seeded(1);
        for &(m1, m2, r) in &[(5, 7, 5), (9, 4, 4), (10, 10, 3)] {
            let m = generate_low_rank(m1, m2, r, 1.0, &mut rng).unwrap();
            assert_eq!(sup_norm(&m), 1.0);
            let m = generate_low_rank(m1, m2, r, 2.5, &mut rng).unwrap();
            assert_eq!(sup_norm(&m), 2.5);
        }
    }

    #[test]
    fn rank_one_minors_vanish() {
        let m = generate_low_rank(6, 5, 1, 1.0, &mut seeded(2)).unwrap();
        for i in 0..6 {
            for k in i + 1..6 {
                for j in 0..5 {
                    for l in j + 1..5 {
                        let minor = m.get(i, j) * m.get(k, l) - m.get(i, l) * m.get(k, j);
                        assert!(minor.abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn numerical_rank_matches() {
        let mut rng = seeded(3);
        for k in 0..100 {
            let r = 1 + k % 5;
            let m = generate_low_rank(12, 9, r, 1.0, &mut rng).unwrap();
            let f = svd(&m).unwrap();
            let d1 = f.singular_values[0];
            assert_eq!(f.rank(1e-8 * d1), r);
        }
    }

    #[test]
    fn spec_validation() {
        let mut s = tiny_spec();
        s.rank_grid = vec![11];
        assert!(s.validate().is_err());
        let mut s = tiny_spec();
        s.p_grid = vec![0.0];
        assert!(s.validate().is_err());
        let mut s = tiny_spec();
        s.replicates = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn spec_json_roundtrip() {
        let s = tiny_spec();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"dims\":[12,10]"));
        let back: ExperimentSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn full_observation_trial_is_exact() {
        let mut s = tiny_spec();
        s.noise = NoiseModel::None;
        s.lambda_rule = LambdaChoice::Value(1e-8);
        s.estimators = vec![Estimator::Svt];
        let recs = run_trial(&s, 2, 1.0, 0).unwrap();
        assert_eq!(recs.len(), 1);
        assert!(recs[0].mse <= 1e-12, "mse {}", recs[0].mse);
    }

    #[test]
    fn trial_is_deterministic() {
        let s = tiny_spec();
        let strip = |v: Vec<TrialRecord>| -> Vec<TrialRecord> {
            v.into_iter().map(|t| TrialRecord { wall_time: Duration::ZERO, ..t }).collect()
        };
        let a = strip(run_trial(&s, 2, 0.7, 1).unwrap());
        let b = strip(run_trial(&s, 2, 0.7, 1).unwrap());
        assert_eq!(a, b);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.mse.to_bits(), y.mse.to_bits());
        }
    }

    #[test]
    fn weighted_error_matches_mse_under_uniform_sampling() {
        let s = tiny_spec();
        for rec in run_trial(&s, 1, 0.5, 0).unwrap() {
            let expect = 0.5 * 120.0 * rec.mse;
            assert!((rec.weighted_err - expect).abs() <= 1e-10 * expect.max(1e-300));
        }
    }

    #[test]
    fn ols_recovers_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let (slope, intercept, stderr) = ols(&xs, &ys).unwrap();
        assert!((slope + 0.5).abs() < 1e-12);
        assert!((intercept - 2.0).abs() < 1e-12);
        assert!(stderr < 1e-12);
        assert!(ols(&xs[..2], &ys[..2]).is_none());
    }

    #[test]
    fn single_point_grid_has_no_fits() {
        let mut s = tiny_spec();
        s.rank_grid = vec![1];
        s.p_grid = vec![0.6];
        s.replicates = 2;
        let bundle = scaling_study(&s).unwrap();
        assert!(bundle.slope_fits.is_empty());
        assert_eq!(bundle.records.len(), 4);
    }

    #[test]
    fn study_orders_records_and_fits_p_axis() {
        let bundle = scaling_study(&tiny_spec()).unwrap();
        assert_eq!(bundle.records.len(), 2 * 3 * 3 * 2);
        assert!(bundle.failures.is_empty());
        for w in bundle.records.windows(2) {
            let key = |t: &TrialRecord| (t.r, t.p, t.replicate, t.estimator);
            assert!(key(&w[0]) < key(&w[1]));
        }
        // Three p values per rank: p-axis fits only (two ranks, two estimators).
        assert!(bundle.slope_fits.iter().all(|f| f.axis == "p"));
        assert_eq!(bundle.slope_fits.len(), 4);
    }

    #[test]
    fn emit_rejects_empty_bundle() {
        let dir = tempfile::tempdir().unwrap();
        let empty = ReportBundle {
            records: vec![],
            failures: vec![],
            feasibility: vec![],
            medians: vec![],
            slope_fits: vec![],
        };
        assert!(emit_report(&empty, dir.path()).is_err());
    }
}

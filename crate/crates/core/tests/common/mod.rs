#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use svt_core::experiment::{Estimator, ExperimentSpec};
use svt_core::{DenseMatrix, LambdaChoice, LambdaRule, NoiseModel};

/// Noise bound of the rate protocol.
pub const PROTOCOL_B: f64 = 0.0125;
pub const PROTOCOL_M: usize = 60;

pub fn random_dense(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale)).unwrap()
}

/// `1/2 ||X - W||_F^2 + lambda ||X||_*`, computed directly from nalgebra.
pub fn prox_objective(x: &DMatrix<f64>, w: &DMatrix<f64>, lambda: f64) -> f64 {
    let nuclear: f64 = x.clone().singular_values().iter().sum();
    0.5 * (x - w).norm_squared() + lambda * nuclear
}

/// Projected subgradient descent on the proximal objective, over the
/// Frobenius ball of radius `||W||_F`, which contains the minimizer.
/// Returns the best iterate seen.
pub fn subgradient_prox_oracle(w: &DMatrix<f64>, lambda: f64, iters: usize) -> DMatrix<f64> {
    let radius = w.norm();
    let mut x = w.clone();
    let mut best = x.clone();
    let mut best_f = prox_objective(&x, w, lambda);
    for k in 1..=iters {
        let svd = x.clone().svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut sub = x.clone() - w;
        for (idx, &s) in svd.singular_values.iter().enumerate() {
            if s > 1e-12 {
                sub += lambda * u.column(idx) * vt.row(idx);
            }
        }
        x -= sub / k as f64;
        let n = x.norm();
        if n > radius {
            x *= radius / n;
        }
        let f = prox_objective(&x, w, lambda);
        if f < best_f {
            best_f = f;
            best = x.clone();
        }
    }
    best
}

/// Scaling-study protocol: square `m x m`, sup-norm bound 1, scaled
/// Rademacher noise, dense-rule regularization.
pub fn protocol_spec(
    rank_grid: Vec<usize>,
    p_grid: Vec<f64>,
    replicates: usize,
    estimators: Vec<Estimator>,
    seed: u64,
) -> ExperimentSpec {
    ExperimentSpec {
        dims: (PROTOCOL_M, PROTOCOL_M),
        rank_grid,
        p_grid,
        noise: NoiseModel::ScaledRademacher { b: PROTOCOL_B },
        a: 1.0,
        lambda_rule: LambdaChoice::Rule(LambdaRule::Dense { b: PROTOCOL_B }),
        replicates,
        seed,
        estimators,
        max_iters: 5000,
        usvt_eta: None,
    }
}

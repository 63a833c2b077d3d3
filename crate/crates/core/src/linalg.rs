//! Dense matrix primitives: SVD, the four matrix norms, index-set
//! restriction, singular value soft-thresholding and entrywise clipping.
//!
//! Every SVD here is a full thin decomposition. Downstream code only consumes
//! products `U diag(d) V^T`, so the ordering of tied singular vectors has no
//! observable effect.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Orthonormality tolerance for singular vector blocks.
pub const ORTHO_TOL: f64 = 1e-10;
/// Relative Frobenius tolerance for SVD reconstruction.
pub const RECON_TOL: f64 = 1e-8;
/// Singular values at or below this count as zero when reporting rank.
pub const RANK_TOL: f64 = 1e-10;


/// A finite, non-empty real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix(DMatrix<f64>);

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        check_dims(rows, cols)?;
        Ok(Self(DMatrix::zeros(rows, cols)))
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        check_dims(rows, cols)?;
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Self::try_from(DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        check_dims(rows, cols)?;
        Self::try_from(DMatrix::from_fn(rows, cols, f))
    }

    pub fn from_diagonal(values: &[f64]) -> Result<Self> {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
    }

    /// Wraps a matrix already known to be finite and non-empty.
    pub(crate) fn from_inner(inner: DMatrix<f64>) -> Self {
        debug_assert!(inner.nrows() > 0 && inner.ncols() > 0);
        debug_assert!(inner.iter().all(|v| v.is_finite()));
        Self(inner)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        Self::try_from(&self.0 * factor)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        ensure_same_shape(self.shape(), other.shape())?;
        Self::try_from(&self.0 - &other.0)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        ensure_same_shape(self.shape(), other.shape())?;
        Self::try_from(&self.0 + &other.0)
    }

    /// Squared Frobenius norm, `sum A_ij^2`.
    pub fn frobenius_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }
}

impl TryFrom<DMatrix<f64>> for DenseMatrix {
    type Error = Error;

    fn try_from(m: DMatrix<f64>) -> Result<Self> {
        check_dims(m.nrows(), m.ncols())?;
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self(m))
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyDimensions { rows, cols });
    }
    Ok(())
}

pub(crate) fn ensure_same_shape(expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Thin SVD `A = U diag(d) V^T` with `d` non-increasing.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub left_vectors: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub right_vectors: DMatrix<f64>,
}

impl SvdFactors {
    /// `U diag(weights) V^T`, skipping zero weights.
    pub fn recompose_with(&self, weights: &[f64]) -> DMatrix<f64> {
        let (m, n) = (self.left_vectors.nrows(), self.right_vectors.nrows());
        let mut out = DMatrix::zeros(m, n);
        for (k, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let u = self.left_vectors.column(k);
            let v = self.right_vectors.column(k);
            out.ger(w, &u, &v, 1.0);
        }
        out
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.recompose_with(self.singular_values.as_slice())
    }

    pub fn rank(&self, tol: f64) -> usize {
        self.singular_values.iter().filter(|&&d| d > tol).count()
    }
}

/// Full thin SVD, `k = min(rows, cols)`, computed by faer and checked by
/// reconstruction.
pub fn svd(a: &DenseMatrix) -> Result<SvdFactors> {
    let (rows, cols) = a.shape();
    let m = &a.0;
    let svd = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)])
        .thin_svd()
        .map_err(|_| Error::SvdNonConvergence { rows, cols })?;
    let k = rows.min(cols);
    let (u, v, s) = (svd.U(), svd.V(), svd.S().column_vector());
    let u = DMatrix::from_fn(rows, k, |i, j| u[(i, j)]);
    let v = DMatrix::from_fn(cols, k, |i, j| v[(i, j)]);
    let d = DVector::from_fn(k, |i, _| s[i]);
    if d.iter().any(|x| !x.is_finite()) || d.iter().zip(d.iter().skip(1)).any(|(x, y)| x < y) {
        return Err(Error::SvdNonConvergence { rows, cols });
    }
    let factors = SvdFactors {
        left_vectors: u,
        singular_values: d,
        right_vectors: v,
    };
    let scale = a.0.norm();
    if (factors.reconstruct() - &a.0).norm() > RECON_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::SvdNonConvergence { rows, cols });
    }
    Ok(factors)
}

/// Singular values only, non-increasing, from a verified factorization.
pub fn singular_values(a: &DenseMatrix) -> Result<DVector<f64>> {
    Ok(svd(a)?.singular_values)
}

/// Result of a soft-thresholding step, retaining the shrunk spectrum.
#[derive(Clone, Debug)]
pub struct Thresholded {
    pub matrix: DenseMatrix,
    /// `(d_i - lambda)_+`, non-increasing.
    pub shrunk_values: Vec<f64>,
}

impl Thresholded {
    pub fn nuclear_norm(&self) -> f64 {
        self.shrunk_values.iter().sum()
    }

    pub fn rank(&self) -> usize {
        self.shrunk_values.iter().filter(|&&d| d > RANK_TOL).count()
    }
}

/// `U diag((d_i - lambda)_+) V^T`, the proximal map of `lambda * ||.||_*`.
pub fn soft_threshold(w: &DenseMatrix, lambda: f64) -> Result<DenseMatrix> {
    soft_threshold_full(w, lambda).map(|t| t.matrix)
}

pub fn soft_threshold_full(w: &DenseMatrix, lambda: f64) -> Result<Thresholded> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("threshold must be finite and >= 0, got {lambda}")));
    }
    let f = svd(w)?;
    let shrunk: Vec<f64> = f
        .singular_values
        .iter()
        .map(|&d| (d - lambda).max(0.0))
        .collect();
    let out = f.recompose_with(&shrunk);
    Ok(Thresholded {
        matrix: DenseMatrix::try_from(out)?,
        shrunk_values: shrunk,
    })
}

pub fn operator_norm(a: &DenseMatrix) -> Result<f64> {
    Ok(singular_values(a)?.iter().copied().fold(0.0, f64::max))
}

pub fn nuclear_norm(a: &DenseMatrix) -> Result<f64> {
    Ok(singular_values(a)?.iter().sum())
}

pub fn frobenius_norm(a: &DenseMatrix) -> f64 {
    a.0.norm()
}

pub fn sup_norm(a: &DenseMatrix) -> f64 {
    a.0.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// A set of matrix positions, stored as a row-major membership bitmap.
///
/// Positions are 0-indexed in memory; the text formats are 1-indexed.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IndexSet {
    rows: usize,
    cols: usize,
    member: Vec<bool>,
    len: usize,
}

impl IndexSet {
    pub fn empty(rows: usize, cols: usize) -> Result<Self> {
        check_dims(rows, cols)?;
        Ok(Self {
            rows,
            cols,
            member: vec![false; rows * cols],
            len: 0,
        })
    }

    pub fn full(rows: usize, cols: usize) -> Result<Self> {
        check_dims(rows, cols)?;
        Ok(Self {
            rows,
            cols,
            member: vec![true; rows * cols],
            len: rows * cols,
        })
    }

    /// Builds a set from (row, col) pairs; repeated pairs are an error.
    pub fn from_pairs(
        rows: usize,
        cols: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut set = Self::empty(rows, cols)?;
        for (i, j) in pairs {
            if !set.insert(i, j)? {
                return Err(invalid(format!("duplicate index ({i}, {j})")));
            }
        }
        Ok(set)
    }

    pub(crate) fn from_bitmap(rows: usize, cols: usize, member: Vec<bool>) -> Self {
        debug_assert_eq!(member.len(), rows * cols);
        let len = member.iter().filter(|&&b| b).count();
        Self {
            rows,
            cols,
            member,
            len,
        }
    }

    /// Returns `Ok(false)` if already present.
    pub fn insert(&mut self, i: usize, j: usize) -> Result<bool> {
        if i >= self.rows || j >= self.cols {
            return Err(invalid(format!(
                "index ({i}, {j}) out of range for {}x{}",
                self.rows, self.cols
            )));
        }
        let k = i * self.cols + j;
        if self.member[k] {
            return Ok(false);
        }
        self.member[k] = true;
        self.len += 1;
        Ok(true)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.rows && j < self.cols && self.member[i * self.cols + j]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn complement(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            member: self.member.iter().map(|b| !b).collect(),
            len: self.rows * self.cols - self.len,
        }
    }

    /// Members in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cols = self.cols;
        self.member
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(k, _)| (k / cols, k % cols))
    }

    /// Fraction of positions included.
    pub fn density(&self) -> f64 {
        self.len as f64 / (self.rows * self.cols) as f64
    }
}

/// `A` on `I`, zero elsewhere.
pub fn restrict(a: &DenseMatrix, set: &IndexSet) -> Result<DenseMatrix> {
    ensure_same_shape(a.shape(), set.shape())?;
    Ok(DenseMatrix(DMatrix::from_fn(a.rows(), a.cols(), |i, j| {
        if set.contains(i, j) {
            a.0[(i, j)]
        } else {
            0.0
        }
    })))
}

/// Entrywise projection onto `[-a, a]`.
pub fn clip(a: &DenseMatrix, bound: f64) -> Result<DenseMatrix> {
    if !(bound > 0.0) || !bound.is_finite() {
        return Err(invalid(format!("clip bound must be finite and > 0, got {bound}")));
    }
    Ok(DenseMatrix(a.0.map(|v| v.clamp(-bound, bound))))
}

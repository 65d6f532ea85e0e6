//! Linear-algebra and simplex primitives shared by every other module.
//!
//! Allocations live on the probability simplex over the action arms. The
//! information matrix of an allocation is `A(λ) = Σ λ_x x xᵀ + ridge·I`, and
//! every Mahalanobis norm `vᵀ A⁻¹ v` goes through a factorization rather than
//! an explicit inverse.

use nalgebra::{DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;

/// Weight of the uniform component mixed into every sampling allocation.
pub const DEFAULT_MIX: f64 = 0.1;
/// Ridge added to every information matrix.
pub const DEFAULT_RIDGE: f64 = 1e-9;

const SIMPLEX_TOL: f64 = 1e-9;

pub fn positive_part(v: f64) -> f64 {
    v.max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidWeights(format!("entry {w} is negative or non-finite")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {sum}")));
        }
        Ok(Self(weights))
    }

    /// Rescales nonnegative weights onto the simplex.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidWeights("negative or non-finite entry".into()));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidWeights("weights sum to zero".into()));
        }
        Ok(Self(weights.into_iter().map(|w| w / sum).collect()))
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform allocation over zero arms");
        Self(vec![1.0 / n as f64; n])
    }

    pub fn vertex(n: usize, i: usize) -> Self {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        Self(w)
    }

    /// `(1 − η)λ + η·uniform`.
    pub fn mix_uniform(&self, eta: f64) -> Self {
        Self(mix_slice(&self.0, eta))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for SimplexWeights {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SimplexWeights> for Vec<f64> {
    fn from(w: SimplexWeights) -> Self {
        w.0
    }
}

pub(crate) fn mix_slice(lambda: &[f64], eta: f64) -> Vec<f64> {
    let u = eta / lambda.len() as f64;
    lambda.iter().map(|l| (1.0 - eta) * l + u).collect()
}

#[derive(Clone, Debug)]
pub struct InfoMatrix {
    matrix: DMatrix<f64>,
    ridge: f64,
}

impl InfoMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn precision(&self) -> Precision {
        Precision::factor(&self.matrix, self.ridge)
    }
}

pub fn info_matrix(lambda: &SimplexWeights, arms: &[Vector], ridge: f64) -> Result<InfoMatrix> {
    if lambda.len() != arms.len() {
        return Err(Error::DimensionMismatch { expected: arms.len(), got: lambda.len() });
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidArgument(format!("ridge {ridge} must be nonnegative")));
    }
    let d = check_dims(arms)?;
    Ok(InfoMatrix { matrix: weighted_gram(lambda.as_slice(), arms, d, ridge), ridge })
}

pub fn mahalanobis_sq(v: &Vector, a: &InfoMatrix) -> Result<f64> {
    if v.len() != a.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: v.len() });
    }
    a.precision().quad(v)
}

fn check_dims(arms: &[Vector]) -> Result<usize> {
    let d = arms.first().map(|a| a.len()).ok_or_else(|| Error::InvalidArgument("empty arm set".into()))?;
    if let Some(bad) = arms.iter().find(|a| a.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
    }
    Ok(d)
}

fn weighted_gram(lambda: &[f64], arms: &[Vector], d: usize, ridge: f64) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::zeros(d, d);
    for (w, x) in lambda.iter().zip(arms) {
        if *w == 0.0 {
            continue;
        }
        m.syger(*w, x, x, 1.0);
    }
    // syger fills the lower triangle only.
    m.fill_upper_triangle_with_lower_triangle();
    for i in 0..d {
        m[(i, i)] += ridge;
    }
    m
}

/// A factorized information matrix ready for repeated solves.
#[derive(Clone, Debug)]
pub enum Precision {
    /// Diagonal `A`; entries stored as-is so zero pivots can be detected.
    Diagonal(Vec<f64>),
    Cholesky(nalgebra::Cholesky<f64, Dyn>),
    /// Eigen-floored pseudo-solve used when Cholesky fails.
    Pseudo { vectors: DMatrix<f64>, inv_values: Vec<f64>, null: Vec<bool> },
}

impl Precision {
    fn factor(matrix: &DMatrix<f64>, ridge: f64) -> Self {
        if let Some(ch) = matrix.clone().cholesky() {
            return Precision::Cholesky(ch);
        }
        let eig = matrix.clone().symmetric_eigen();
        let max_ev = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
        let tol = (1e-12 * max_ev).max(f64::MIN_POSITIVE);
        let mut inv_values = Vec::with_capacity(eig.eigenvalues.len());
        let mut null = Vec::with_capacity(eig.eigenvalues.len());
        for &ev in eig.eigenvalues.iter() {
            if ridge > 0.0 {
                inv_values.push(1.0 / ev.max(ridge));
                null.push(false);
            } else if ev > tol {
                inv_values.push(1.0 / ev);
                null.push(false);
            } else {
                inv_values.push(0.0);
                null.push(true);
            }
        }
        Precision::Pseudo { vectors: eig.eigenvectors, inv_values, null }
    }

    pub fn dim(&self) -> usize {
        match self {
            Precision::Diagonal(d) => d.len(),
            Precision::Cholesky(ch) => ch.l_dirty().nrows(),
            Precision::Pseudo { inv_values, .. } => inv_values.len(),
        }
    }

    /// `A⁻¹ v`.
    pub fn solve(&self, v: &Vector) -> Result<Vector> {
        match self {
            Precision::Diagonal(diag) => {
                let mut out = Vector::zeros(v.len());
                for k in 0..v.len() {
                    if v[k] == 0.0 {
                        continue;
                    }
                    if diag[k] <= 0.0 {
                        return Err(Error::SingularDesign);
                    }
                    out[k] = v[k] / diag[k];
                }
                Ok(out)
            }
            Precision::Cholesky(ch) => Ok(ch.solve(v)),
            Precision::Pseudo { vectors, inv_values, null } => {
                let coords = vectors.tr_mul(v);
                let scale = v.norm().max(f64::MIN_POSITIVE);
                let mut scaled = coords.clone();
                for k in 0..coords.len() {
                    if null[k] && coords[k].abs() > 1e-9 * scale {
                        return Err(Error::SingularDesign);
                    }
                    scaled[k] *= inv_values[k];
                }
                Ok(vectors * scaled)
            }
        }
    }

    /// `vᵀ A⁻¹ v`.
    pub fn quad(&self, v: &Vector) -> Result<f64> {
        match self {
            Precision::Diagonal(diag) => {
                let mut acc = 0.0;
                for k in 0..v.len() {
                    let vk = v[k];
                    if vk == 0.0 {
                        continue;
                    }
                    if diag[k] <= 0.0 {
                        return Err(Error::SingularDesign);
                    }
                    acc += vk * vk / diag[k];
                }
                Ok(acc)
            }
            _ => Ok(v.dot(&self.solve(v)?).max(0.0)),
        }
    }
}

/// An arm set with a fast path for axis-aligned arms, where every arm has at
/// most one nonzero coordinate and `A(λ)` is diagonal.
#[derive(Clone, Debug)]
pub struct ArmSet {
    arms: Vec<Vector>,
    dim: usize,
    axis: Option<Vec<Option<(usize, f64)>>>,
}

impl ArmSet {
    pub fn new(arms: Vec<Vector>) -> Result<Self> {
        let dim = check_dims(&arms)?;
        if arms.iter().any(|a| a.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument("non-finite arm entry".into()));
        }
        let mut axis = Vec::with_capacity(arms.len());
        for a in &arms {
            let mut nz = a.iter().enumerate().filter(|(_, v)| **v != 0.0);
            match (nz.next(), nz.next()) {
                (None, _) => axis.push(None),
                (Some((k, v)), None) => axis.push(Some((k, *v))),
                _ => {
                    axis.clear();
                    break;
                }
            }
        }
        let axis = (axis.len() == arms.len()).then_some(axis);
        Ok(Self { arms, dim, axis })
    }

    pub fn arms(&self) -> &[Vector] {
        &self.arms
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_axis_aligned(&self) -> bool {
        self.axis.is_some()
    }

    /// Factorized `A(λ) + ridge·I` for a (mixed) allocation given as a slice.
    pub fn precision(&self, lambda: &[f64], ridge: f64) -> Result<Precision> {
        if lambda.len() != self.arms.len() {
            return Err(Error::DimensionMismatch { expected: self.arms.len(), got: lambda.len() });
        }
        match &self.axis {
            Some(axis) => {
                let mut diag = vec![ridge; self.dim];
                for (w, a) in lambda.iter().zip(axis) {
                    if let Some((k, v)) = a {
                        diag[*k] += w * v * v;
                    }
                }
                Ok(Precision::Diagonal(diag))
            }
            None => Ok(Precision::factor(&weighted_gram(lambda, &self.arms, self.dim, ridge), ridge)),
        }
    }

    /// `xᵀu` for arm `i`.
    pub fn dot(&self, i: usize, u: &Vector) -> f64 {
        match &self.axis {
            Some(axis) => axis[i].map_or(0.0, |(k, v)| v * u[k]),
            None => self.arms[i].dot(u),
        }
    }
}

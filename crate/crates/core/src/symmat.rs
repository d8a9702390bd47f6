//! Dense K×K symmetric matrices.
//!
//! K stays small (≤ 8) everywhere in this crate, so every spectral operation
//! goes through a full symmetric eigendecomposition. The Fréchet derivatives of
//! the square root are obtained by solving the Sylvester equation
//! `√R·D + D·√R = C` in the eigenbasis of `R`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues above `-SQRT_CLAMP` are treated as round-off on the PSD boundary.
pub const SQRT_CLAMP: f64 = 1e-8;
/// Minimum eigenvalue for the Fréchet derivatives of the square root.
pub const SINGULAR_TOL: f64 = 1e-10;

/// Symmetric real matrix, stored symmetrized.
#[derive(Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.rows()).finish()
    }
}

impl SymMatrix {
    /// Symmetrizes `(m + mᵀ)/2`. Fails on a non-square input.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let t = m.transpose();
        Ok(Self((m + t) * 0.5))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch("rows of unequal length".into()));
        }
        Self::from_matrix(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
    }

    pub fn from_row_major(k: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != k * k {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries, got {}",
                k * k,
                entries.len()
            )));
        }
        Self::from_matrix(DMatrix::from_row_slice(k, k, entries))
    }

    pub fn zeros(k: usize) -> Self {
        Self(DMatrix::zeros(k, k))
    }

    pub fn identity(k: usize) -> Self {
        Self(DMatrix::identity(k, k))
    }

    pub fn scalar(v: f64) -> Self {
        Self(DMatrix::from_element(1, 1, v))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_row_slice(d)))
    }

    /// `E^{(l,l')}`: ones at `(l,l')` and `(l',l)`, a single one when `l == l'`.
    pub fn unit(k: usize, l: usize, lp: usize) -> Self {
        let mut m = DMatrix::zeros(k, k);
        m[(l, lp)] = 1.0;
        m[(lp, l)] = 1.0;
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.0.row(i).iter().copied().collect()).collect()
    }

    pub fn row_major(&self) -> Vec<f64> {
        self.rows().into_iter().flatten().collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// `Σ_{l,l'} A_{ll'}`.
    pub fn sum_entries(&self) -> f64 {
        self.0.sum()
    }

    /// Frobenius inner product.
    pub fn inner(&self, other: &Self) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    pub fn hadamard(&self, other: &Self) -> Self {
        Self(self.0.component_mul(&other.0))
    }

    /// Entrywise power; `k = 0` yields the all-ones matrix.
    pub fn hadamard_power(&self, k: u32) -> Self {
        Self(self.0.map(|v| v.powi(k as i32)))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (&self.0 - &other.0).amax()
    }

    /// Ascending eigenvalues with matching eigenvector columns.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let eig = SymmetricEigen::new(self.0.clone());
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(self.dim(), self.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
        (values, vectors)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().0[0]
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    fn from_spectrum(values: &[f64], vectors: &DMatrix<f64>) -> Self {
        let d = DMatrix::from_diagonal(&DVector::from_row_slice(values));
        Self::from_matrix(vectors * d * vectors.transpose()).expect("square by construction")
    }

    /// Principal square root of a PSD matrix.
    pub fn sqrt_psd(&self) -> Result<Self> {
        let (values, vectors) = self.eigen();
        if values[0] < -SQRT_CLAMP {
            return Err(Error::NotPsd(values[0]));
        }
        let roots: Vec<f64> = values.iter().map(|v| v.max(0.0).sqrt()).collect();
        Ok(Self::from_spectrum(&roots, &vectors))
    }

    /// Nearest PSD matrix in Frobenius norm.
    pub fn project_psd(&self) -> Self {
        let (values, vectors) = self.eigen();
        if values[0] >= 0.0 {
            return self.clone();
        }
        let clamped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
        Self::from_spectrum(&clamped, &vectors)
    }

    /// Solves `√R·D + D·√R = C` for symmetric `D`, with `R = self`.
    pub fn sylvester_sqrt(&self, rhs: &Self) -> Result<Self> {
        let (values, vectors) = self.eigen();
        if values[0] <= SINGULAR_TOL {
            return Err(Error::SingularMatrix(values[0]));
        }
        let roots: Vec<f64> = values.iter().map(|v| v.sqrt()).collect();
        let c = vectors.transpose() * &rhs.0 * &vectors;
        let d = DMatrix::from_fn(self.dim(), self.dim(), |a, b| c[(a, b)] / (roots[a] + roots[b]));
        Self::from_matrix(&vectors * d * vectors.transpose())
    }

    /// `∂√R/∂R_{ll'}`: the symmetric solution of `√R·D + D·√R = E^{(l,l')}`.
    pub fn dsqrt(&self, l: usize, lp: usize) -> Result<Self> {
        self.check_index(l, lp)?;
        self.sylvester_sqrt(&Self::unit(self.dim(), l, lp))
    }

    /// `∂²√R/∂R_{ll'}²`: solves `√R·D + D·√R = -2 (∂√R/∂R_{ll'})²`.
    pub fn d2sqrt(&self, l: usize, lp: usize) -> Result<Self> {
        let first = self.dsqrt(l, lp)?;
        let rhs = Self::from_matrix(&first.0 * &first.0 * -2.0)?;
        self.sylvester_sqrt(&rhs)
    }

    fn check_index(&self, l: usize, lp: usize) -> Result<()> {
        if l >= self.dim() || lp >= self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "index ({l},{lp}) out of range for dimension {}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let k = self.dim();
        (0..k).map(|i| (0..k).map(|j| self.0[(i, j)] * v[j]).sum()).collect()
    }

    /// `vᵀ A w`.
    pub fn quad_form(&self, v: &[f64], w: &[f64]) -> f64 {
        v.iter()
            .enumerate()
            .map(|(i, vi)| vi * w.iter().enumerate().map(|(j, wj)| self.0[(i, j)] * wj).sum::<f64>())
            .sum()
    }

    pub fn is_strictly_diagonally_dominant(&self) -> bool {
        (0..self.dim()).all(|i| {
            let off: f64 = (0..self.dim()).filter(|&j| j != i).map(|j| self.0[(i, j)].abs()).sum();
            self.0[(i, i)] > off
        })
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Self::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &rhs.0)
    }
}

impl Mul<f64> for &SymMatrix {
    type Output = SymMatrix;
    fn mul(self, rhs: f64) -> SymMatrix {
        self.scale(rhs)
    }
}

/// Random PSD matrix `B·Bᵀ/K` with Gaussian `B`, rescaled to Frobenius norm `scale`.
pub fn random_psd<R: Rng + ?Sized>(k: usize, scale: f64, rng: &mut R) -> SymMatrix {
    let b: DMatrix<f64> = DMatrix::from_fn(k, k, |_, _| StandardNormal.sample(rng));
    let a: DMatrix<f64> = &b * b.transpose();
    let norm = a.norm();
    let a = if norm > 0.0 { a * (scale / norm) } else { a };
    SymMatrix::from_matrix(a).expect("square by construction")
}

/// Random symmetric matrix with standard normal entries (not PSD in general).
pub fn random_symmetric<R: Rng + ?Sized>(k: usize, rng: &mut R) -> SymMatrix {
    let b: DMatrix<f64> = DMatrix::from_fn(k, k, |_, _| StandardNormal.sample(rng));
    SymMatrix::from_matrix(b).expect("square by construction")
}

/// Box of perturbation matrices used as initial conditions of the
/// interpolation ODE: off-diagonal entries in `[s, 2s]`, diagonal entries in
/// `[2Ks, (2K+1)s]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationBox {
    pub k: usize,
    pub s_n: f64,
}

impl PerturbationBox {
    pub fn new(k: usize, s_n: f64) -> Result<Self> {
        if k == 0 || !(s_n > 0.0 && s_n < 1.0) {
            return Err(Error::InvalidParameter(format!("perturbation box needs K ≥ 1 and s_n in (0,1), got K={k}, s_n={s_n}")));
        }
        Ok(Self { k, s_n })
    }

    pub fn for_size(n: usize, k: usize) -> Result<Self> {
        Self::new(k, default_sn(n, k))
    }

    pub fn contains(&self, m: &SymMatrix) -> bool {
        let (k, s) = (self.k as f64, self.s_n);
        let tol = 1e-12;
        m.dim() == self.k
            && (0..self.k).all(|i| {
                (0..self.k).all(|j| {
                    let v = m.get(i, j);
                    if i == j {
                        v >= 2.0 * k * s - tol && v <= (2.0 * k + 1.0) * s + tol
                    } else {
                        v >= s - tol && v <= 2.0 * s + tol
                    }
                })
            })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SymMatrix {
        let k = self.k;
        let s = self.s_n;
        let mut m = DMatrix::zeros(k, k);
        for i in 0..k {
            m[(i, i)] = rng.random_range(2.0 * k as f64 * s..=(2.0 * k as f64 + 1.0) * s);
            for j in (i + 1)..k {
                let v = rng.random_range(s..=2.0 * s);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    /// Centre of the box.
    pub fn center(&self) -> SymMatrix {
        let k = self.k as f64;
        let mut m = DMatrix::from_element(self.k, self.k, 1.5 * self.s_n);
        for i in 0..self.k {
            m[(i, i)] = (2.0 * k + 0.5) * self.s_n;
        }
        SymMatrix(m)
    }
}

/// Exponent used by [`default_sn`]: half the admissible upper limit.
pub fn sn_exponent(k: usize) -> f64 {
    0.5 / (9.0 + 3.0 * (k * (k + 1)) as f64)
}

/// `s_n = (0.99/n)^α` with `α = 0.5/(9 + 3K(K+1))`.
pub fn default_sn(n: usize, k: usize) -> f64 {
    (0.99 / n.max(1) as f64).powf(sn_exponent(k))
}

//! Gaussian expectations over `N(0, I_K)`.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// How the outer Gaussian expectation is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum QuadratureSpec {
    GaussHermite { nodes_per_dim: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl QuadratureSpec {
    /// 160 nodes for K = 1, 20 nodes per dimension for K = 2, 3, Monte Carlo beyond.
    pub fn default_for(k: usize) -> Self {
        match k {
            1 => Self::GaussHermite { nodes_per_dim: 160 },
            2 | 3 => Self::GaussHermite { nodes_per_dim: 20 },
            _ => Self::MonteCarlo { samples: 4096, seed: 0x5eed },
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        match *self {
            Self::GaussHermite { nodes_per_dim } => {
                if k > 3 {
                    return Err(Error::InvalidParameter(format!("Gauss-Hermite grids are limited to K ≤ 3, got K={k}")));
                }
                if nodes_per_dim == 0 || nodes_per_dim > 512 {
                    return Err(Error::InvalidParameter(format!("nodes per dimension must lie in 1..=512, got {nodes_per_dim}")));
                }
            }
            Self::MonteCarlo { samples, .. } => {
                if samples < 2 {
                    return Err(Error::InvalidParameter("Monte Carlo needs at least 2 samples".into()));
                }
            }
        }
        Ok(())
    }

    /// Coarser rule whose disagreement with `self` serves as the error estimate.
    fn companion(&self) -> Option<Self> {
        match *self {
            Self::GaussHermite { nodes_per_dim } if nodes_per_dim >= 3 => {
                Some(Self::GaussHermite { nodes_per_dim: (2 * nodes_per_dim).div_ceil(3) })
            }
            _ => None,
        }
    }
}

/// Nodes and weights of a rule for `E f(Z)`, `Z ~ N(0, I_K)`.
#[derive(Clone, Debug)]
pub struct Rule {
    pub k: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub spec: QuadratureSpec,
    coarse: Option<Box<Rule>>,
}

impl Rule {
    pub fn new(spec: QuadratureSpec, k: usize) -> Result<Self> {
        spec.validate(k)?;
        let mut rule = Self::build(spec, k);
        rule.coarse = spec.companion().map(|c| Box::new(Self::build(c, k)));
        Ok(rule)
    }

    fn build(spec: QuadratureSpec, k: usize) -> Self {
        let (nodes, weights) = match spec {
            QuadratureSpec::GaussHermite { nodes_per_dim } => tensor_grid(&gauss_hermite(nodes_per_dim), k),
            QuadratureSpec::MonteCarlo { samples, seed } => {
                let mut rng = rng_from_seed(seed);
                let nodes = (0..samples).map(|_| (0..k).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
                (nodes, vec![1.0 / samples as f64; samples])
            }
        };
        Self { k, nodes, weights, spec, coarse: None }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self.spec, QuadratureSpec::MonteCarlo { .. })
    }

    pub fn coarse(&self) -> Option<&Rule> {
        self.coarse.as_deref()
    }

    /// Weighted sum of per-node values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Error attached to a per-node value vector: standard error for Monte
    /// Carlo, zero for a grid (use [`Rule::coarse`] for grid error).
    pub fn sampling_error(&self, values: &[f64]) -> f64 {
        if !self.is_monte_carlo() {
            return 0.0;
        }
        crate::stats::MeanStderr::from_samples(values).stderr
    }
}

/// Probabilists' Gauss–Hermite rule: nodes and weights with `Σ w f(x) ≈ E f(Z)`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    if n == 1 {
        return (vec![0.0], vec![1.0]);
    }
    let jacobi = DMatrix::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { (i.max(j) as f64).sqrt() } else { 0.0 });
    let mut x: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    x.sort_by(f64::total_cmp);
    let mut w = vec![0.0; n];
    for (xi, wi) in x.iter_mut().zip(w.iter_mut()) {
        for _ in 0..3 {
            let (pn, pn1, _) = orthonormal_hermite(n, *xi);
            let dp = (n as f64).sqrt() * pn1;
            if dp != 0.0 {
                *xi -= pn / dp;
            }
        }
        let (_, _, sumsq) = orthonormal_hermite(n, *xi);
        *wi = 1.0 / sumsq;
    }
    // Symmetrize to kill round-off.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let a = 0.5 * (x[j] - x[i]);
        let b = 0.5 * (w[i] + w[j]);
        x[i] = -a;
        x[j] = a;
        w[i] = b;
        w[j] = b;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    (x, w)
}

/// Returns `(p_n(x), p_{n-1}(x), Σ_{k<n} p_k(x)²)` for the orthonormal
/// probabilists' Hermite polynomials.
fn orthonormal_hermite(n: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut sumsq = 0.0;
    for k in 0..n {
        sumsq += cur * cur;
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev, sumsq)
}

fn tensor_grid(rule: &(Vec<f64>, Vec<f64>), k: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let m = rule.0.len();
    let total = m.pow(k as u32);
    let mut nodes = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut node = Vec::with_capacity(k);
        let mut w = 1.0;
        for _ in 0..k {
            let i = rem % m;
            rem /= m;
            node.push(rule.0[i]);
            w *= rule.1[i];
        }
        nodes.push(node);
        weights.push(w);
    }
    (nodes, weights)
}

//! Finitely supported priors on `R^K`.

use std::path::Path;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symmat::SymMatrix;

/// Discrete distribution on `R^K` with strictly positive weights summing to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Prior {
    k: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

/// `Σ_X = E[X Xᵀ]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondMoment(pub SymMatrix);

impl SecondMoment {
    pub fn matrix(&self) -> &SymMatrix {
        &self.0
    }
}

#[derive(Serialize, Deserialize)]
struct AtomJson {
    x: Vec<f64>,
    w: f64,
}

#[derive(Serialize, Deserialize)]
struct PriorJson {
    #[serde(rename = "K")]
    k: usize,
    atoms: Vec<AtomJson>,
}

impl Prior {
    /// Builds a prior from `(point, weight)` pairs, renormalizing the weights.
    pub fn new(atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let Some(first) = atoms.first() else {
            return Err(Error::InvalidPrior("empty atom list".into()));
        };
        let k = first.0.len();
        if k == 0 {
            return Err(Error::InvalidPrior("atoms must have positive dimension".into()));
        }
        let mut points = Vec::with_capacity(atoms.len());
        let mut weights = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            if x.len() != k {
                return Err(Error::DimensionMismatch(format!("atom of length {} in a K={k} prior", x.len())));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidPrior(format!("nonpositive weight {w}")));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidPrior("non-finite atom coordinate".into()));
            }
            points.push(x);
            weights.push(w);
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { k, points, weights })
    }

    pub fn rademacher() -> Self {
        Self::new(vec![(vec![1.0], 0.5), (vec![-1.0], 0.5)]).unwrap()
    }

    /// `{0: 1−ρ, 1/√ρ: ρ}`, unit second moment.
    pub fn sparse(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::InvalidPrior(format!("sparsity must lie in (0,1], got {rho}")));
        }
        if rho == 1.0 {
            return Self::new(vec![(vec![1.0], 1.0)]);
        }
        Self::new(vec![(vec![0.0], 1.0 - rho), (vec![1.0 / rho.sqrt()], rho)])
    }

    /// Uniform law on `{±1}^K`.
    pub fn product_rademacher(k: usize) -> Result<Self> {
        if k == 0 || k > 16 {
            return Err(Error::InvalidPrior(format!("product_rademacher needs 1 ≤ K ≤ 16, got {k}")));
        }
        let atoms = (0..1usize << k)
            .map(|mask| ((0..k).map(|l| if mask >> l & 1 == 1 { -1.0 } else { 1.0 }).collect(), 1.0))
            .collect();
        Self::new(atoms)
    }

    /// Point mass at `x`.
    pub fn deterministic(x: Vec<f64>) -> Result<Self> {
        Self::new(vec![(x, 1.0)])
    }

    /// Parses `rademacher`, `sparse(rho)`, `product_rademacher(K)`,
    /// `deterministic(a,b,...)` or `@path.json`.
    pub fn from_name(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if let Some(path) = spec.strip_prefix('@') {
            return Self::from_json_file(path);
        }
        let (name, arg) = match spec.find('(') {
            Some(i) if spec.ends_with(')') => (&spec[..i], Some(&spec[i + 1..spec.len() - 1])),
            Some(_) => return Err(Error::InvalidPrior(format!("malformed prior name '{spec}'"))),
            None => (spec, None),
        };
        let num = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| Error::InvalidPrior(format!("bad number '{s}' in '{spec}'")))
        };
        match (name.trim(), arg) {
            ("rademacher", None) => Ok(Self::rademacher()),
            ("sparse", Some(a)) => Self::sparse(num(a)?),
            ("product_rademacher", Some(a)) => {
                let k = a.trim().parse::<usize>().map_err(|_| Error::InvalidPrior(format!("bad K in '{spec}'")))?;
                Self::product_rademacher(k)
            }
            ("deterministic", Some(a)) => Self::deterministic(a.split(',').map(num).collect::<Result<_>>()?),
            _ => Err(Error::InvalidPrior(format!("unknown prior '{spec}'"))),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let parsed: PriorJson = serde_json::from_str(s).map_err(|e| Error::InvalidPrior(e.to_string()))?;
        let prior = Self::new(parsed.atoms.into_iter().map(|a| (a.x, a.w)).collect())?;
        if prior.k != parsed.k {
            return Err(Error::DimensionMismatch(format!("declared K={} but atoms have length {}", parsed.k, prior.k)));
        }
        Ok(prior)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let doc = PriorJson {
            k: self.k,
            atoms: self.points.iter().zip(&self.weights).map(|(x, &w)| AtomJson { x: x.clone(), w }).collect(),
        };
        serde_json::to_string(&doc).expect("plain data")
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points.iter().map(Vec::as_slice).zip(self.weights.iter().copied())
    }

    pub fn second_moment(&self) -> SecondMoment {
        let k = self.k;
        let mut m = vec![0.0; k * k];
        for (x, w) in self.atoms() {
            for i in 0..k {
                for j in 0..k {
                    m[i * k + j] += w * x[i] * x[j];
                }
            }
        }
        SecondMoment(SymMatrix::from_row_major(k, &m).expect("K×K"))
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.k];
        for (x, w) in self.atoms() {
            m.iter_mut().zip(x).for_each(|(a, b)| *a += w * b);
        }
        m
    }

    /// `max_l E|X_l|^order`.
    pub fn moment(&self, order: u32) -> f64 {
        (0..self.k)
            .map(|l| self.atoms().map(|(x, w)| w * x[l].abs().powi(order as i32)).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Multiplies every atom by `λ^{1/(2p)}`, moving the SNR into the prior.
    pub fn rescale_to_unit_snr(&self, p: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("λ must be positive, got {lambda}")));
        }
        if p < 2 {
            return Err(Error::InvalidParameter(format!("tensor order must be ≥ 2, got {p}")));
        }
        let c = lambda.powf(1.0 / (2 * p) as f64);
        Ok(Self {
            k: self.k,
            points: self.points.iter().map(|x| x.iter().map(|v| v * c).collect()).collect(),
            weights: self.weights.clone(),
        })
    }

    /// Whether every atom is the zero vector.
    pub fn is_zero(&self) -> bool {
        self.points.iter().all(|x| x.iter().all(|&v| v == 0.0))
    }

    pub fn sampler(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(&self.weights).expect("positive weights")
    }

    /// Index of a random atom.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler().sample(rng)
    }
}

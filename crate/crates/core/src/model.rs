//! The spiked-tensor channel, its Hamiltonian and exact enumeration of the
//! posterior for small `n`.
//!
//! Configurations are indexed by a mixed-radix counter over atom indices with
//! row 0 as the least significant digit. Disorder for sample `s` of a run with
//! master seed `m` is drawn from `derived_rng(m, [s])` in a fixed order (signal
//! rows, then tensor noise, then side-channel noise), so the same seed yields
//! common random numbers across λ, t and `R`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::Prior;
use crate::rng::derived_rng;
use crate::stats::{log_sum_exp, MeanStderr};
use crate::symmat::SymMatrix;

/// Default cap on the number of enumerated configurations.
pub const DEFAULT_BUDGET: u64 = 1 << 20;
/// Largest tensor index set accepted by [`sample_instance`].
pub const MAX_TENSOR_ENTRIES: u128 = 1 << 24;
const M_CACHE_LIMIT: usize = 1 << 23;

/// Nondecreasing `p`-tuples over `0..n` in lexicographic order.
pub fn ordered_indices(n: usize, p: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if n == 0 || p == 0 {
        return out;
    }
    let mut cur = vec![0usize; p];
    loop {
        out.push(cur.clone());
        let Some(pos) = (0..p).rev().find(|&a| cur[a] + 1 < n) else { break };
        let v = cur[pos] + 1;
        cur[pos..].iter_mut().for_each(|c| *c = v);
    }
    out
}

/// `C(n+p−1, p)`.
pub fn index_count(n: usize, p: usize) -> u128 {
    let mut c: u128 = 1;
    for i in 0..p as u128 {
        c = c * (n as u128 + i) / (i + 1);
    }
    c
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// `√(λ(p−1)!/n^{p−1})`.
pub fn tensor_coefficient(n: usize, p: usize, lambda: f64) -> f64 {
    (lambda * factorial(p - 1) / (n as f64).powi(p as i32 - 1)).sqrt()
}

/// `m_i(x) = Σ_l Π_a x_{i_a l}` for a flat row-major `n×K` matrix.
fn tensor_products(x: &[f64], k: usize, idx: &[Vec<usize>], out: &mut [f64]) {
    for (o, tuple) in out.iter_mut().zip(idx) {
        *o = (0..k).map(|l| tuple.iter().map(|&j| x[j * k + l]).product::<f64>()).sum();
    }
}

/// `Q = xᵀX/n` (not symmetric in general).
pub fn overlap(x: &[Vec<f64>], big_x: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if x.len() != big_x.len() || x.is_empty() {
        return Err(Error::DimensionMismatch(format!("{} rows against {}", x.len(), big_x.len())));
    }
    let k = x[0].len();
    if x.iter().chain(big_x).any(|r| r.len() != k) {
        return Err(Error::DimensionMismatch("rows of unequal length".into()));
    }
    let n = x.len() as f64;
    Ok(DMatrix::from_fn(k, k, |l, lp| x.iter().zip(big_x).map(|(a, b)| a[l] * b[lp]).sum::<f64>() / n))
}

/// One realization of the channel.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorInstance {
    pub n: usize,
    pub k: usize,
    pub p: usize,
    pub lambda: f64,
    pub seed: u64,
    /// Atom index of each signal row.
    pub atoms: Vec<usize>,
    pub x: Vec<Vec<f64>>,
    pub indices: Vec<Vec<usize>>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    idx: Vec<usize>,
    y: f64,
}

#[derive(Serialize, Deserialize)]
struct InstanceJson {
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    p: usize,
    lambda: f64,
    seed: u64,
    #[serde(rename = "X")]
    x: Vec<Vec<f64>>,
    #[serde(rename = "Y")]
    y: Vec<Entry>,
}

impl TensorInstance {
    pub fn coefficient(&self) -> f64 {
        tensor_coefficient(self.n, self.p, self.lambda)
    }

    /// Noiseless part `s_i(X)` of each observation.
    pub fn signal(&self) -> Vec<f64> {
        let flat: Vec<f64> = self.x.iter().flatten().copied().collect();
        let mut m = vec![0.0; self.indices.len()];
        tensor_products(&flat, self.k, &self.indices, &mut m);
        let c = self.coefficient();
        m.iter().map(|v| c * v).collect()
    }

    pub fn to_json(&self) -> String {
        let doc = InstanceJson {
            n: self.n,
            k: self.k,
            p: self.p,
            lambda: self.lambda,
            seed: self.seed,
            x: self.x.clone(),
            y: self.indices.iter().zip(&self.y).map(|(i, &y)| Entry { idx: i.clone(), y }).collect(),
        };
        serde_json::to_string(&doc).expect("plain data")
    }
}

/// Independent randomness of one disorder sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Disorder {
    pub atoms: Vec<usize>,
    pub z: Vec<f64>,
    /// Side-channel noise, row-major `n×K`.
    pub z_tilde: Vec<f64>,
}

impl Disorder {
    pub fn draw<R: Rng + ?Sized>(prior: &Prior, n: usize, n_entries: usize, rng: &mut R) -> Self {
        let sampler = prior.sampler();
        let atoms = (0..n).map(|_| sampler.sample(rng)).collect();
        let z = (0..n_entries).map(|_| StandardNormal.sample(rng)).collect();
        let z_tilde = (0..n * prior.k()).map(|_| StandardNormal.sample(rng)).collect();
        Self { atoms, z, z_tilde }
    }

    /// Sample `index` of a run with master seed `seed`.
    pub fn for_sample(prior: &Prior, n: usize, p: usize, seed: u64, index: u64) -> Self {
        let entries = index_count(n, p) as usize;
        Self::draw(prior, n, entries, &mut derived_rng(seed, &[index]))
    }
}

fn check_np(n: usize, p: usize) -> Result<()> {
    if n == 0 || p < 2 {
        return Err(Error::InvalidParameter(format!("need n ≥ 1 and p ≥ 2, got n={n}, p={p}")));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("λ must be nonnegative, got {lambda}")));
    }
    Ok(())
}

pub fn sample_instance<R: Rng + ?Sized>(prior: &Prior, n: usize, p: usize, lambda: f64, rng: &mut R) -> Result<TensorInstance> {
    check_np(n, p)?;
    check_lambda(lambda)?;
    let count = index_count(n, p);
    if count > MAX_TENSOR_ENTRIES {
        return Err(Error::BudgetExceeded { needed: count, budget: MAX_TENSOR_ENTRIES as u64 });
    }
    let seed = rng.random();
    let d = Disorder::draw(prior, n, count as usize, rng);
    Ok(instance_from_disorder(prior, n, p, lambda, seed, &d))
}

pub fn instance_from_disorder(prior: &Prior, n: usize, p: usize, lambda: f64, seed: u64, d: &Disorder) -> TensorInstance {
    let x: Vec<Vec<f64>> = d.atoms.iter().map(|&a| prior.points()[a].clone()).collect();
    let mut inst = TensorInstance {
        n,
        k: prior.k(),
        p,
        lambda,
        seed,
        atoms: d.atoms.clone(),
        x,
        indices: ordered_indices(n, p),
        z: d.z.clone(),
        y: Vec::new(),
    };
    inst.y = inst.signal().iter().zip(&d.z).map(|(s, z)| s + z).collect();
    inst
}

/// `Σ_I [½κ²m_i(x)² − κ·Y_i·m_i(x)]` with `κ = √(λ(p−1)!/n^{p−1})`.
pub fn hamiltonian(x: &[Vec<f64>], inst: &TensorInstance) -> Result<f64> {
    if x.len() != inst.n || x.iter().any(|r| r.len() != inst.k) {
        return Err(Error::DimensionMismatch(format!("x must be {}x{}", inst.n, inst.k)));
    }
    let flat: Vec<f64> = x.iter().flatten().copied().collect();
    let mut m = vec![0.0; inst.indices.len()];
    tensor_products(&flat, inst.k, &inst.indices, &mut m);
    let c = inst.coefficient();
    Ok(m.iter().zip(&inst.y).map(|(m, y)| 0.5 * c * c * m * m - c * y * m).sum())
}

/// Side channel `Ỹ_j = √R X_j + Z̃_j`.
#[derive(Clone, Debug)]
pub struct SideChannel {
    pub r: SymMatrix,
    pub sqrt_r: SymMatrix,
    /// Row-major `n×K`.
    pub y_tilde: Vec<f64>,
}

impl SideChannel {
    pub fn new(r: &SymMatrix, x: &[Vec<f64>], z_tilde: &[f64]) -> Result<Self> {
        let k = r.dim();
        let sqrt_r = r.sqrt_psd()?;
        let mut y_tilde = Vec::with_capacity(x.len() * k);
        for (j, row) in x.iter().enumerate() {
            let s = sqrt_r.apply(row);
            y_tilde.extend(s.iter().zip(&z_tilde[j * k..(j + 1) * k]).map(|(a, b)| a + b));
        }
        Ok(Self { r: r.clone(), sqrt_r, y_tilde })
    }
}

/// Precomputed tables for enumerating `|support|^n` configurations.
#[derive(Debug)]
pub struct Enumerator {
    prior: Prior,
    n: usize,
    p: usize,
    indices: Vec<Vec<usize>>,
    count: usize,
    /// Row-major `n×K` matrix of every configuration.
    xs: Vec<f64>,
    /// `Σ_I m_i(x)²` per configuration.
    sq: Vec<f64>,
    m_cache: Option<Vec<f64>>,
    log_prior: Vec<f64>,
}

impl Enumerator {
    pub fn new(prior: &Prior, n: usize, p: usize, budget: u64) -> Result<Self> {
        check_np(n, p)?;
        let needed = (prior.len() as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        if needed > budget as u128 {
            return Err(Error::BudgetExceeded { needed, budget });
        }
        let count = needed as usize;
        let k = prior.k();
        let a = prior.len();
        let indices = ordered_indices(n, p);
        let lw: Vec<f64> = prior.weights().iter().map(|w| w.ln()).collect();
        let mut xs = Vec::with_capacity(count * n * k);
        let mut log_prior = Vec::with_capacity(count);
        for c in 0..count {
            let mut rem = c;
            let mut lp = 0.0;
            for _ in 0..n {
                let d = rem % a;
                rem /= a;
                xs.extend_from_slice(&prior.points()[d]);
                lp += lw[d];
            }
            log_prior.push(lp);
        }
        let ni = indices.len();
        let cache_ok = count.saturating_mul(ni) <= M_CACHE_LIMIT;
        let mut m_cache = if cache_ok { Some(vec![0.0; count * ni]) } else { None };
        let mut sq = vec![0.0; count];
        let mut buf = vec![0.0; ni];
        for c in 0..count {
            let x = &xs[c * n * k..(c + 1) * n * k];
            let out = match m_cache.as_mut() {
                Some(mc) => &mut mc[c * ni..(c + 1) * ni],
                None => &mut buf[..],
            };
            tensor_products(x, k, &indices, out);
            sq[c] = out.iter().map(|v| v * v).sum();
        }
        Ok(Self { prior: prior.clone(), n, p, indices, count, xs, sq, m_cache, log_prior })
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.prior.k()
    }

    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Row-major `n×K` matrix of configuration `c`.
    pub fn config(&self, c: usize) -> &[f64] {
        let s = self.n * self.k();
        &self.xs[c * s..(c + 1) * s]
    }

    /// Configuration index whose rows are the given atoms.
    pub fn config_index(&self, atoms: &[usize]) -> usize {
        atoms.iter().rev().fold(0, |acc, &a| acc * self.prior.len() + a)
    }

    /// Exact posterior for tensor coefficient `kappa`, observations `y` and an
    /// optional side channel.
    pub fn gibbs(&self, kappa: f64, y: &[f64], side: Option<&SideChannel>) -> GibbsEnsemble<'_> {
        let ni = self.indices.len();
        let n = self.n;
        let k = self.k();
        let a = self.prior.len();
        // per-row, per-atom side-channel energy
        let side_e: Option<Vec<f64>> = side.map(|sc| {
            let mut e = vec![0.0; n * a];
            let proj: Vec<Vec<f64>> = self.prior.points().iter().map(|x| sc.sqrt_r.apply(x)).collect();
            for j in 0..n {
                let yt = &sc.y_tilde[j * k..(j + 1) * k];
                for (d, x) in self.prior.points().iter().enumerate() {
                    let dot: f64 = yt.iter().zip(&proj[d]).map(|(u, v)| u * v).sum();
                    e[j * a + d] = 0.5 * sc.r.quad_form(x, x) - dot;
                }
            }
            e
        });
        let mut buf = vec![0.0; ni];
        let mut log_weights = Vec::with_capacity(self.count);
        for c in 0..self.count {
            let mut energy = 0.0;
            if kappa != 0.0 {
                let m: &[f64] = match &self.m_cache {
                    Some(mc) => &mc[c * ni..(c + 1) * ni],
                    None => {
                        tensor_products(self.config(c), k, &self.indices, &mut buf);
                        &buf
                    }
                };
                let my: f64 = m.iter().zip(y).map(|(u, v)| u * v).sum();
                energy += 0.5 * kappa * kappa * self.sq[c] - kappa * my;
            }
            if let Some(e) = &side_e {
                let mut rem = c;
                for j in 0..n {
                    energy += e[j * a + rem % a];
                    rem /= a;
                }
            }
            log_weights.push(self.log_prior[c] - energy);
        }
        GibbsEnsemble::new(self, log_weights)
    }
}

/// Exact posterior over all configurations.
#[derive(Debug)]
pub struct GibbsEnsemble<'a> {
    enumerator: &'a Enumerator,
    pub log_weights: Vec<f64>,
    pub log_partition: f64,
    pub probs: Vec<f64>,
}

impl<'a> GibbsEnsemble<'a> {
    fn new(enumerator: &'a Enumerator, log_weights: Vec<f64>) -> Self {
        let log_partition = log_sum_exp(&log_weights);
        let probs = log_weights.iter().map(|l| (l - log_partition).exp()).collect();
        Self { enumerator, log_weights, log_partition, probs }
    }

    pub fn enumerator(&self) -> &Enumerator {
        self.enumerator
    }

    /// `⟨f(x)⟩`.
    pub fn bracket(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.probs.iter().enumerate().map(|(c, pc)| if *pc == 0.0 { 0.0 } else { pc * f(self.enumerator.config(c)) }).sum()
    }

    /// `⟨x⟩`, row-major `n×K`.
    pub fn mean_x(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.enumerator.n * self.enumerator.k()];
        for (c, pc) in self.probs.iter().enumerate() {
            for (a, b) in m.iter_mut().zip(self.enumerator.config(c)) {
                *a += pc * b;
            }
        }
        m
    }

    /// `⟨Q⟩` against the signal `big_x` (row-major `n×K`), as row-major `K×K`.
    pub fn mean_overlap(&self, big_x: &[f64]) -> Vec<f64> {
        overlap_flat(&self.mean_x(), big_x, self.enumerator.n, self.enumerator.k())
    }
}

/// `aᵀb/n` for row-major `n×K` inputs, returned row-major `K×K`.
pub fn overlap_flat(a: &[f64], b: &[f64], n: usize, k: usize) -> Vec<f64> {
    let mut q = vec![0.0; k * k];
    for j in 0..n {
        for l in 0..k {
            for lp in 0..k {
                q[l * k + lp] += a[j * k + l] * b[j * k + lp];
            }
        }
    }
    q.iter_mut().for_each(|v| *v /= n as f64);
    q
}

pub fn exact_gibbs<'a>(enumerator: &'a Enumerator, inst: &TensorInstance) -> Result<GibbsEnsemble<'a>> {
    if inst.n != enumerator.n || inst.p != enumerator.p || inst.k != enumerator.k() {
        return Err(Error::Mismatch("instance and enumerator disagree on (n, p, K)".into()));
    }
    Ok(enumerator.gibbs(inst.coefficient(), &inst.y, None))
}

fn planted_log_weight(e: &Enumerator, g: &GibbsEnsemble<'_>, atoms: &[usize]) -> f64 {
    let c = e.config_index(atoms);
    g.log_weights[c] - e.log_prior[c]
}

/// Per-sample free entropy `(1/n) ln Z` and MI integrand.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleSample {
    pub free_entropy: f64,
    pub mutual_info: f64,
}

pub fn oracle_sample(enumerator: &Enumerator, lambda: f64, seed: u64, index: u64) -> OracleSample {
    let prior = enumerator.prior();
    let (n, p) = (enumerator.n(), enumerator.p());
    let d = Disorder::for_sample(prior, n, p, seed, index);
    let inst = instance_from_disorder(prior, n, p, lambda, seed, &d);
    let g = enumerator.gibbs(inst.coefficient(), &inst.y, None);
    let f = g.log_partition / n as f64;
    if prior.len() == 1 {
        // I(X;Y) ≤ H(X) = 0
        return OracleSample { free_entropy: f, mutual_info: 0.0 };
    }
    // −H(X;Y) = ½Σ s_i² + Σ s_i Z_i. Both −H(X;Y) and ½Σ s_i² are unbiased for
    // E[−H]; their average has the smallest variance in practice.
    let planted = planted_log_weight(enumerator, &g, &d.atoms) / n as f64;
    let signal_energy: f64 = inst.signal().iter().map(|s| s * s).sum::<f64>() / (2.0 * n as f64);
    OracleSample { free_entropy: f, mutual_info: 0.5 * (planted + signal_energy) - f }
}

/// Free entropy and MI per variable, estimated on common disorder samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub n: usize,
    pub lambda: f64,
    pub free_entropy: MeanStderr,
    pub mutual_info: MeanStderr,
    /// Sample variance of `(1/n) ln Z`.
    pub free_entropy_variance: f64,
}

pub fn oracle_estimate(prior: &Prior, n: usize, p: usize, lambda: f64, n_disorder: usize, seed: u64, budget: u64) -> Result<OracleEstimate> {
    check_lambda(lambda)?;
    if n_disorder == 0 {
        return Err(Error::InvalidParameter("need at least one disorder sample".into()));
    }
    let e = Enumerator::new(prior, n, p, budget)?;
    Ok(oracle_with(&e, lambda, n_disorder, seed))
}

pub fn oracle_with(e: &Enumerator, lambda: f64, n_disorder: usize, seed: u64) -> OracleEstimate {
    let samples: Vec<OracleSample> = (0..n_disorder as u64).into_par_iter().map(|i| oracle_sample(e, lambda, seed, i)).collect();
    let f: Vec<f64> = samples.iter().map(|s| s.free_entropy).collect();
    let mi: Vec<f64> = samples.iter().map(|s| s.mutual_info).collect();
    OracleEstimate {
        n: e.n(),
        lambda,
        free_entropy: MeanStderr::from_samples(&f),
        mutual_info: MeanStderr::from_samples(&mi),
        free_entropy_variance: MeanStderr::variance(&f),
    }
}

pub fn free_entropy_mc(prior: &Prior, n: usize, p: usize, lambda: f64, n_disorder: usize, seed: u64) -> Result<MeanStderr> {
    Ok(oracle_estimate(prior, n, p, lambda, n_disorder, seed, DEFAULT_BUDGET)?.free_entropy)
}

pub fn exact_mutual_info(prior: &Prior, n: usize, p: usize, lambda: f64, n_disorder: usize, seed: u64) -> Result<MeanStderr> {
    Ok(oracle_estimate(prior, n, p, lambda, n_disorder, seed, DEFAULT_BUDGET)?.mutual_info)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_hermite;
    use crate::rng::rng_from_seed;

    #[test]
    fn index_sets() {
        assert_eq!(ordered_indices(2, 2), vec![vec![0, 0], vec![0, 1], vec![1, 1]]);
        assert_eq!(ordered_indices(3, 3).len(), 10);
        assert_eq!(ordered_indices(10, 4).len(), 715);
        assert_eq!(index_count(10, 4), 715);
        for (n, p) in [(1, 2), (4, 3), (6, 4), (7, 2)] {
            let idx = ordered_indices(n, p);
            assert_eq!(idx.len() as u128, index_count(n, p));
            assert!(idx.windows(2).all(|w| w[0] < w[1]));
            assert!(idx.iter().all(|t| t.windows(2).all(|w| w[0] <= w[1])));
        }
    }

    #[test]
    fn instance_signal_and_noise() {
        let mut rng = rng_from_seed(1);
        let inst = sample_instance(&Prior::rademacher(), 5, 2, 0.0, &mut rng).unwrap();
        assert_eq!(inst.y, inst.z);
        let det = Prior::deterministic(vec![1.0]).unwrap();
        let inst = sample_instance(&det, 4, 3, 2.0, &mut rng).unwrap();
        let c = (2.0 * 2.0 / 16.0f64).sqrt();
        assert!(inst.signal().iter().all(|s| (s - c).abs() < 1e-15));
        let mut acc = Vec::new();
        for _ in 0..500 {
            let inst = sample_instance(&Prior::rademacher(), 4, 2, 1.0, &mut rng).unwrap();
            acc.extend(inst.y.iter().zip(inst.signal()).map(|(y, s)| y - s));
        }
        let m = MeanStderr::from_samples(&acc);
        assert!(m.mean.abs() <= 4.0 * m.stderr);
        assert!(matches!(sample_instance(&Prior::rademacher(), 1000, 4, 1.0, &mut rng), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn hamiltonian_examples() {
        let mut rng = rng_from_seed(2);
        let inst = sample_instance(&Prior::rademacher(), 3, 2, 1.0, &mut rng).unwrap();
        assert_eq!(hamiltonian(&vec![vec![0.0]; 3], &inst).unwrap(), 0.0);
        let inst = sample_instance(&Prior::rademacher(), 1, 2, 1.0, &mut rng).unwrap();
        let x = 0.7f64;
        let h = hamiltonian(&[vec![x]], &inst).unwrap();
        assert!((h - (0.5 * x.powi(4) - inst.y[0] * x * x)).abs() < 1e-15);
        assert!(hamiltonian(&[vec![1.0, 2.0]], &inst).is_err());
    }

    #[test]
    fn bayes_identity_on_enumeration() {
        let prior = Prior::new(vec![(vec![1.0], 0.3), (vec![-0.5], 0.5), (vec![2.0], 0.2)]).unwrap();
        let e = Enumerator::new(&prior, 3, 2, DEFAULT_BUDGET).unwrap();
        let mut rng = rng_from_seed(3);
        let inst = sample_instance(&prior, 3, 2, 1.5, &mut rng).unwrap();
        let g = exact_gibbs(&e, &inst).unwrap();
        // log posterior of x from the Gaussian likelihood directly
        let c = inst.coefficient();
        let direct: Vec<f64> = (0..e.len())
            .map(|ci| {
                let x: Vec<Vec<f64>> = e.config(ci).chunks(1).map(|r| r.to_vec()).collect();
                let mut m = vec![0.0; inst.indices.len()];
                tensor_products(e.config(ci), 1, &inst.indices, &mut m);
                let ll: f64 = m.iter().zip(&inst.y).map(|(m, y)| -0.5 * (y - c * m).powi(2)).sum();
                let lp: f64 = x.iter().map(|r| prior.weights()[prior.points().iter().position(|p| p == r).unwrap()].ln()).sum();
                ll + lp
            })
            .collect();
        let norm = log_sum_exp(&direct);
        for (ci, d) in direct.iter().enumerate() {
            let x: Vec<Vec<f64>> = e.config(ci).chunks(1).map(|r| r.to_vec()).collect();
            let from_h = -hamiltonian(&x, &inst).unwrap() + e.log_prior[ci] - g.log_partition;
            assert!((from_h - (d - norm)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_snr_posterior_is_prior() {
        let prior = Prior::new(vec![(vec![1.0, 0.0], 0.2), (vec![0.0, 1.0], 0.8)]).unwrap();
        let e = Enumerator::new(&prior, 3, 2, DEFAULT_BUDGET).unwrap();
        let mut rng = rng_from_seed(4);
        let inst = sample_instance(&prior, 3, 2, 0.0, &mut rng).unwrap();
        let g = exact_gibbs(&e, &inst).unwrap();
        assert!(g.log_partition.abs() < 1e-14);
        for (c, pc) in g.probs.iter().enumerate() {
            assert!((pc - e.log_prior[c].exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn single_site_rademacher_posterior_is_uniform() {
        let e = Enumerator::new(&Prior::rademacher(), 1, 2, DEFAULT_BUDGET).unwrap();
        let mut rng = rng_from_seed(5);
        let inst = sample_instance(&Prior::rademacher(), 1, 2, 3.0, &mut rng).unwrap();
        let g = exact_gibbs(&e, &inst).unwrap();
        assert!(g.mean_x()[0].abs() < 1e-15);
        assert!((g.probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn log_partition_matches_direct_sum() {
        let prior = Prior::product_rademacher(2).unwrap();
        let e = Enumerator::new(&prior, 4, 2, DEFAULT_BUDGET).unwrap();
        let mut rng = rng_from_seed(6);
        let inst = sample_instance(&prior, 4, 2, 1.0, &mut rng).unwrap();
        let g = exact_gibbs(&e, &inst).unwrap();
        let direct = g.log_weights.iter().map(|l| l.exp()).sum::<f64>().ln();
        assert!((g.log_partition - direct).abs() < 1e-12);
    }

    #[test]
    fn budget_is_enforced() {
        assert!(matches!(Enumerator::new(&Prior::rademacher(), 21, 2, DEFAULT_BUDGET), Err(Error::BudgetExceeded { .. })));
        assert!(Enumerator::new(&Prior::rademacher(), 20, 2, DEFAULT_BUDGET).is_ok());
    }

    #[test]
    fn overlap_examples() {
        let x = vec![vec![1.0, -1.0], vec![-1.0, -1.0], vec![1.0, 1.0]];
        let q = overlap(&x, &x).unwrap();
        assert!((0..2).all(|l| (q[(l, l)] - 1.0).abs() < 1e-15));
        let zero = vec![vec![0.0, 0.0]; 3];
        assert_eq!(overlap(&zero, &x).unwrap(), DMatrix::zeros(2, 2));
        assert!(overlap(&x[..2], &x).is_err());
    }

    #[test]
    fn oracle_trivial_cases() {
        let est = oracle_estimate(&Prior::rademacher(), 5, 2, 0.0, 20, 1, DEFAULT_BUDGET).unwrap();
        assert_eq!(est.free_entropy.mean, 0.0);
        assert_eq!(est.mutual_info.mean, 0.0);
        let det = Prior::deterministic(vec![1.5]).unwrap();
        let e = Enumerator::new(&det, 5, 3, DEFAULT_BUDGET).unwrap();
        for i in 0..10 {
            let s = oracle_sample(&e, 2.0, 9, i);
            assert_eq!(s.mutual_info, 0.0);
            let d = Disorder::for_sample(&det, 5, 3, 9, i);
            let inst = instance_from_disorder(&det, 5, 3, 2.0, 9, &d);
            let closed = -hamiltonian(&inst.x, &inst).unwrap() / 5.0;
            assert!((s.free_entropy - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn rescaling_gives_identical_estimates() {
        let prior = Prior::new(vec![(vec![1.0], 0.4), (vec![-0.5], 0.6)]).unwrap();
        let a = exact_mutual_info(&prior, 6, 2, 4.0, 50, 11).unwrap();
        let b = exact_mutual_info(&prior.rescale_to_unit_snr(2, 4.0).unwrap(), 6, 2, 1.0, 50, 11).unwrap();
        assert!((a.mean - b.mean).abs() <= 1e-10);
        assert!((a.mean - b.mean).abs() <= 3.0 * a.stderr.max(b.stderr) + 1e-12);
    }

    /// `I(X;Y)/n` at `n = 2`, `p = 2`, `K = 1` by tensor Gauss–Hermite over the three noise entries.
    fn kl_oracle(prior: &Prior, lambda: f64) -> f64 {
        let n = 2;
        let idx = ordered_indices(n, 2);
        let c = tensor_coefficient(n, 2, lambda);
        let configs: Vec<(Vec<f64>, f64)> = (0..prior.len() * prior.len())
            .map(|ci| {
                let (a, b) = (ci % prior.len(), ci / prior.len());
                let x = [prior.points()[a][0], prior.points()[b][0]];
                let s = idx.iter().map(|t| c * x[t[0]] * x[t[1]]).collect();
                (s, prior.weights()[a] * prior.weights()[b])
            })
            .collect();
        let (gx, gw) = gauss_hermite(40);
        let mut total = 0.0;
        for (s, w) in &configs {
            let mut acc = 0.0;
            for (i0, w0) in gx.iter().zip(&gw) {
                for (i1, w1) in gx.iter().zip(&gw) {
                    for (i2, w2) in gx.iter().zip(&gw) {
                        let z = [*i0, *i1, *i2];
                        let y: Vec<f64> = s.iter().zip(&z).map(|(a, b)| a + b).collect();
                        let lq: Vec<f64> = configs
                            .iter()
                            .map(|(s2, w2)| w2.ln() - 0.5 * y.iter().zip(s2).map(|(u, v)| (u - v).powi(2)).sum::<f64>())
                            .collect();
                        let own = -0.5 * z.iter().map(|v| v * v).sum::<f64>();
                        acc += w0 * w1 * w2 * (own - log_sum_exp(&lq));
                    }
                }
            }
            total += w * acc;
        }
        total / n as f64
    }

    #[test]
    fn mutual_info_identity_matches_kl_at_n2() {
        let prior = Prior::new(vec![(vec![1.2], 0.35), (vec![-0.4], 0.65)]).unwrap();
        let lambda = 1.7;
        let oracle = kl_oracle(&prior, lambda);
        let est = exact_mutual_info(&prior, 2, 2, lambda, 40_000, 5).unwrap();
        assert!((est.mean - oracle).abs() <= 3.0 * est.stderr, "est {:?} oracle {oracle}", est);
    }
}

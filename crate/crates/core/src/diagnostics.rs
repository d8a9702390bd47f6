//! Statistical property suites with pass/fail/inconclusive reports.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interpolation::{Estimator, Interpolator};
use crate::model::{oracle_sample, overlap_flat, Enumerator};
use crate::prior::Prior;
use crate::replica::PsiEvaluator;
use crate::rng::derived_rng;
use crate::stats::MeanStderr;
use crate::symmat::{random_psd, SymMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub parameters: String,
    pub statistic: f64,
    pub stderr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Rule turning rows into a verdict.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Criterion {
    /// `|statistic| ≤ sigmas·stderr + floor` on every row.
    AllWithin { sigmas: f64, floor: f64 },
    /// `statistic ≤ sigmas·stderr + floor` on every row.
    AllNonpositive { sigmas: f64, floor: f64 },
    /// `max/min ≤ max_ratio` over the row statistics.
    RatioAtMost { max_ratio: f64 },
    /// Consecutive rows never rise by more than `sigmas` combined standard errors.
    Nonincreasing { sigmas: f64 },
}

impl Criterion {
    /// Magnitude criteria are inconclusive when some row's stderr exceeds half its statistic.
    fn needs_resolution(&self) -> bool {
        matches!(self, Self::RatioAtMost { .. } | Self::Nonincreasing { .. })
    }

    pub fn verdict(&self, rows: &[ScanRow]) -> Verdict {
        if rows.iter().any(|r| !r.statistic.is_finite() || !r.stderr.is_finite()) {
            return Verdict::Fail;
        }
        if self.needs_resolution() && rows.iter().any(|r| r.stderr > 0.5 * r.statistic.abs()) {
            return Verdict::Inconclusive;
        }
        let ok = match *self {
            Self::AllWithin { sigmas, floor } => rows.iter().all(|r| r.statistic.abs() <= sigmas * r.stderr + floor),
            Self::AllNonpositive { sigmas, floor } => rows.iter().all(|r| r.statistic <= sigmas * r.stderr + floor),
            Self::RatioAtMost { max_ratio } => {
                let max = rows.iter().map(|r| r.statistic).fold(f64::NEG_INFINITY, f64::max);
                let min = rows.iter().map(|r| r.statistic).fold(f64::INFINITY, f64::min);
                max <= 0.0 || (min > 0.0 && max / min <= max_ratio)
            }
            Self::Nonincreasing { sigmas } => rows
                .windows(2)
                .all(|w| w[1].statistic - w[0].statistic <= sigmas * w[0].stderr.hypot(w[1].stderr)),
        };
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            Self::AllWithin { sigmas, floor } => format!("|statistic| <= {sigmas}*stderr + {floor:e} on every row"),
            Self::AllNonpositive { sigmas, floor } => format!("statistic <= {sigmas}*error + {floor:e} on every row"),
            Self::RatioAtMost { max_ratio } => format!("max/min of statistic <= {max_ratio}"),
            Self::Nonincreasing { sigmas } => format!("nonincreasing up to {sigmas} combined stderr"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub scan_id: String,
    pub rows: Vec<ScanRow>,
    pub verdict: Verdict,
    pub criterion: String,
}

impl ScanReport {
    pub fn new(scan_id: &str, rows: Vec<ScanRow>, criterion: Criterion) -> Self {
        Self { scan_id: scan_id.into(), verdict: criterion.verdict(&rows), criterion: criterion.describe(), rows }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Multisets of overlap-entry indices of size `1..=max_degree`.
fn monomials(entries: usize, max_degree: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max_degree {
        let mut next = Vec::new();
        for m in &frontier {
            let start = m.last().copied().unwrap_or(0);
            for e in start..entries {
                let mut mm = m.clone();
                mm.push(e);
                next.push(mm);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn monomial_name(m: &[usize], k: usize) -> String {
    m.iter().map(|&e| format!("Q{}{}", e / k, e % k)).collect::<Vec<_>>().join("*")
}

/// `E⟨g(x, X)⟩ = E⟨g(x, x')⟩` for every overlap monomial of degree at most `p`,
/// with exact one- and two-replica brackets per disorder sample.
pub fn nishimori_suite(interp: &Interpolator, t: f64, r: &SymMatrix, est: &Estimator) -> Result<ScanReport> {
    let (n, k) = (interp.n(), interp.k());
    let monos = monomials(k * k, interp.p());
    let e = interp.enumerator();
    let diffs: Vec<Vec<f64>> = (0..est.n_disorder as u64)
        .into_par_iter()
        .map(|i| {
            let inst = interp.instance(t, r, est.seed, i)?;
            let (g, big_x) = interp.ensemble(&inst)?;
            let eval = |q: &[f64]| -> Vec<f64> { monos.iter().map(|m| m.iter().map(|&j| q[j]).product()).collect() };
            let mut planted = vec![0.0; monos.len()];
            let mut replica = vec![0.0; monos.len()];
            for (c, &pc) in g.probs.iter().enumerate() {
                if pc == 0.0 {
                    continue;
                }
                let xc = e.config(c);
                for (a, v) in planted.iter_mut().zip(eval(&overlap_flat(xc, &big_x, n, k))) {
                    *a += pc * v;
                }
                for (c2, &pc2) in g.probs.iter().enumerate() {
                    let w = pc * pc2;
                    if w == 0.0 {
                        continue;
                    }
                    for (a, v) in replica.iter_mut().zip(eval(&overlap_flat(xc, e.config(c2), n, k))) {
                        *a += w * v;
                    }
                }
            }
            Ok(planted.iter().zip(&replica).map(|(a, b)| a - b).collect())
        })
        .collect::<Result<_>>()?;
    let cols = crate::stats::columnwise(&diffs);
    let rows = monos
        .iter()
        .zip(cols)
        .map(|(m, c)| ScanRow { parameters: format!("g={},t={t},n={n}", monomial_name(m, k)), statistic: c.mean, stderr: c.stderr })
        .collect();
    Ok(ScanReport::new("nishimori", rows, Criterion::AllWithin { sigmas: 3.0, floor: 1e-12 }))
}

/// Sample variance with a delta-method standard error.
fn variance_with_error(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = MeanStderr::variance(xs);
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / m;
    (var, ((m4 - var * var).max(0.0) / m).sqrt())
}

/// `n·Var[(1/n) ln Z_n]` across sizes; bounded ratio expected.
pub fn free_entropy_variance_scan(prior: &Prior, p: usize, lambda: f64, n_list: &[usize], est: &Estimator, budget: u64) -> Result<ScanReport> {
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let e = Enumerator::new(prior, n, p, budget)?;
        let f: Vec<f64> = (0..est.n_disorder as u64)
            .into_par_iter()
            .map(|i| oracle_sample(&e, lambda, est.seed, i).free_entropy)
            .collect();
        let (var, se) = variance_with_error(&f);
        rows.push(ScanRow { parameters: format!("n={n},lambda={lambda}"), statistic: n as f64 * var, stderr: n as f64 * se });
    }
    Ok(ScanReport::new("free_entropy_variance", rows, Criterion::RatioAtMost { max_ratio: 3.0 }))
}

/// Uniform draw from PSD matrices whose entries lie in `[−radius, radius]`.
pub fn sample_psd_box<R: Rng + ?Sized>(k: usize, radius: f64, rng: &mut R) -> SymMatrix {
    loop {
        let mut m = vec![0.0; k * k];
        for l in 0..k {
            m[l * k + l] = rng.random_range(0.0..radius);
            for lp in l + 1..k {
                let v = rng.random_range(-radius..radius);
                m[l * k + lp] = v;
                m[lp * k + l] = v;
            }
        }
        let s = SymMatrix::from_row_major(k, &m).expect("K×K");
        if s.is_psd(0.0) {
            return s;
        }
    }
}

/// Averages `E⟨‖Q_s − E⟨Q_s⟩‖²⟩` over `(t, R)` drawn from a fixed box shared by every `n`.
pub fn overlap_fluctuation_scan(
    prior: &Prior,
    p: usize,
    n_list: &[usize],
    draws: usize,
    per_draw: usize,
    seed: u64,
    budget: u64,
) -> Result<ScanReport> {
    if per_draw < 2 || draws < 2 {
        return Err(Error::InvalidParameter("need at least two draws and two disorder samples per draw".into()));
    }
    let k = prior.k();
    let sigma = prior.second_moment().0;
    let radius = 4.0 * (k as f64).powf(1.5) + sigma.trace().powi(p as i32 - 1);
    let points: Vec<(f64, SymMatrix)> = (0..draws as u64)
        .map(|j| {
            let mut rng = derived_rng(seed, &[0x0f1c, j]);
            let t = rng.random_range(0.0..1.0);
            (t, sample_psd_box(k, radius, &mut rng))
        })
        .collect();
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let interp = Interpolator::new(prior, n, p, budget)?;
        let per: Vec<f64> = points
            .par_iter()
            .enumerate()
            .map(|(j, (t, r))| {
                let batch = interp.batch(*t, r, None, per_draw, crate::rng::derive_seed(seed, &[0x0f1d, j as u64]))?;
                let m = per_draw as f64;
                let second: f64 = batch
                    .iter()
                    .map(|s| {
                        (0..k * k)
                            .map(|ij| s.qs_var[ij] + (0.5 * (s.q[ij] + s.q[(ij % k) * k + ij / k])).powi(2))
                            .sum::<f64>()
                    })
                    .sum::<f64>()
                    / m;
                let sym: Vec<Vec<f64>> = batch
                    .iter()
                    .map(|s| (0..k * k).map(|ij| 0.5 * (s.q[ij] + s.q[(ij % k) * k + ij / k])).collect())
                    .collect();
                // ‖mean‖² overestimates ‖E⟨Q_s⟩‖² by Σ Var/m.
                let mean_sq: f64 = crate::stats::columnwise(&sym)
                    .iter()
                    .map(|c| c.mean * c.mean - c.stderr * c.stderr)
                    .sum();
                Ok(second - mean_sq)
            })
            .collect::<Result<_>>()?;
        let s = MeanStderr::from_samples(&per);
        rows.push(ScanRow { parameters: format!("n={n}"), statistic: s.mean, stderr: s.stderr });
    }
    Ok(ScanReport::new("overlap_fluctuation", rows, Criterion::Nonincreasing { sigmas: 2.0 }))
}

/// Convexity at `t ∈ {¼, ½, ¾}` and the `Tr(Σ)/2` Lipschitz bound on random PSD pairs.
/// Each row's statistic is a violation amount; its error column is the quadrature error.
pub fn psi_shape_suite(psi: &PsiEvaluator, n_pairs: usize, seed: u64) -> Result<ScanReport> {
    let k = psi.prior().k();
    let half_trace = psi.prior().second_moment().0.trace() / 2.0;
    let rows: Vec<Vec<ScanRow>> = (0..n_pairs as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = derived_rng(seed, &[0x5a9e, i]);
            let a = random_psd(k, rng.random_range(0.0..3.0), &mut rng);
            let b = random_psd(k, rng.random_range(0.0..3.0), &mut rng);
            shape_rows(psi, &a, &b, half_trace, &format!("pair={i}"))
        })
        .collect::<Result<_>>()?;
    Ok(ScanReport::new("psi_shape", rows.into_iter().flatten().collect(), Criterion::AllNonpositive { sigmas: 3.0, floor: 1e-12 }))
}

pub fn shape_rows(psi: &PsiEvaluator, a: &SymMatrix, b: &SymMatrix, half_trace: f64, tag: &str) -> Result<Vec<ScanRow>> {
    let mut rows = Vec::with_capacity(4);
    for t in [0.25, 0.5, 0.75] {
        let mid = &a.scale(t) + &b.scale(1.0 - t);
        let (v, err) = psi.combination(&[(1.0, mid), (-t, a.clone()), (t - 1.0, b.clone())])?;
        rows.push(ScanRow { parameters: format!("{tag},convexity,t={t}"), statistic: v, stderr: err });
    }
    let (d, err) = psi.combination(&[(1.0, a.clone()), (-1.0, b.clone())])?;
    rows.push(ScanRow {
        parameters: format!("{tag},lipschitz"),
        statistic: d.abs() - half_trace * (a - b).frobenius_norm(),
        stderr: err,
    });
    Ok(rows)
}

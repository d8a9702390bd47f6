//! The potential ψ, the replica-symmetric functional φ and its maximization
//! over the PSD cone.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::Prior;
use crate::quadrature::{QuadratureSpec, Rule};
use crate::rng::derived_rng;
use crate::symmat::{random_psd, SymMatrix};

/// Evaluates `ψ(S) = E ln Σ_x w_x exp(XᵀSx + Z̃ᵀ√S x − ½xᵀSx)` for one prior
/// and one quadrature rule.
#[derive(Clone, Debug)]
pub struct PsiEvaluator {
    prior: Prior,
    rule: Rule,
}

impl PsiEvaluator {
    pub fn new(prior: &Prior, quad: QuadratureSpec) -> Result<Self> {
        Ok(Self { prior: prior.clone(), rule: Rule::new(quad, prior.k())? })
    }

    pub fn with_default_quadrature(prior: &Prior) -> Self {
        Self::new(prior, QuadratureSpec::default_for(prior.k())).expect("default rule is valid")
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn rule(&self) -> &Rule {
        &self.rule
    }

    fn check(&self, s: &SymMatrix) -> Result<()> {
        if s.dim() != self.prior.k() {
            return Err(Error::DimensionMismatch(format!("S is {}x{} but K={}", s.dim(), s.dim(), self.prior.k())));
        }
        Ok(())
    }

    /// Integrand of the outer expectation at every node of `rule`.
    fn terms_on(&self, rule: &Rule, s: &SymMatrix) -> Result<Vec<f64>> {
        self.check(s)?;
        if s.frobenius_norm() == 0.0 {
            return Ok(vec![0.0; rule.len()]);
        }
        let root = s.sqrt_psd()?;
        let pts = self.prior.points();
        let lw: Vec<f64> = self.prior.weights().iter().map(|w| w.ln()).collect();
        let proj: Vec<Vec<f64>> = pts.iter().map(|x| root.apply(x)).collect();
        // a[X][x] = XᵀSx − ½xᵀSx + ln w_x
        let a: Vec<Vec<f64>> = pts
            .iter()
            .map(|big| pts.iter().zip(&lw).map(|(x, l)| s.quad_form(big, x) - 0.5 * s.quad_form(x, x) + l).collect())
            .collect();
        let mut expo = vec![0.0; pts.len()];
        Ok(rule
            .nodes
            .iter()
            .map(|z| {
                let zb: Vec<f64> = proj.iter().map(|b| dot(z, b)).collect();
                let mut acc = 0.0;
                for (row, wx) in a.iter().zip(self.prior.weights()) {
                    for ((e, ai), zi) in expo.iter_mut().zip(row).zip(&zb) {
                        *e = ai + zi;
                    }
                    acc += wx * crate::stats::log_sum_exp(&expo);
                }
                acc
            })
            .collect())
    }

    pub fn node_terms(&self, s: &SymMatrix) -> Result<Vec<f64>> {
        self.terms_on(&self.rule, s)
    }

    pub fn value(&self, s: &SymMatrix) -> Result<f64> {
        Ok(self.rule.integrate(&self.node_terms(s)?))
    }

    /// Value and error estimate: Monte Carlo standard error, or the
    /// disagreement with a coarser Gauss–Hermite grid.
    pub fn value_with_error(&self, s: &SymMatrix) -> Result<(f64, f64)> {
        self.combination(&[(1.0, s.clone())])
    }

    /// `Σ c_i ψ(S_i)` with an error estimate that accounts for the shared nodes.
    pub fn combination(&self, terms: &[(f64, SymMatrix)]) -> Result<(f64, f64)> {
        let combine = |rule: &Rule| -> Result<Vec<f64>> {
            let mut acc = vec![0.0; rule.len()];
            for (c, s) in terms {
                for (a, t) in acc.iter_mut().zip(self.terms_on(rule, s)?) {
                    *a += c * t;
                }
            }
            Ok(acc)
        };
        let fine = combine(&self.rule)?;
        let value = self.rule.integrate(&fine);
        let err = match self.rule.coarse() {
            Some(coarse) => (value - coarse.integrate(&combine(coarse)?)).abs(),
            None => self.rule.sampling_error(&fine),
        };
        Ok((value, err))
    }

    /// `∇ψ(S) = ½·sym(E[⟨x⟩_S Xᵀ])` (Frobenius gradient over symmetric matrices).
    pub fn gradient(&self, s: &SymMatrix) -> Result<SymMatrix> {
        self.check(s)?;
        let k = self.prior.k();
        let root = s.sqrt_psd()?;
        let pts = self.prior.points();
        let lw: Vec<f64> = self.prior.weights().iter().map(|w| w.ln()).collect();
        let proj: Vec<Vec<f64>> = pts.iter().map(|x| root.apply(x)).collect();
        let a: Vec<Vec<f64>> = pts
            .iter()
            .map(|big| pts.iter().zip(&lw).map(|(x, l)| s.quad_form(big, x) - 0.5 * s.quad_form(x, x) + l).collect())
            .collect();
        let mut m = vec![0.0; k * k];
        let mut expo = vec![0.0; pts.len()];
        for (z, wz) in self.rule.nodes.iter().zip(&self.rule.weights) {
            let zb: Vec<f64> = proj.iter().map(|b| dot(z, b)).collect();
            for ((row, big), wx) in a.iter().zip(pts).zip(self.prior.weights()) {
                for ((e, ai), zi) in expo.iter_mut().zip(row).zip(&zb) {
                    *e = ai + zi;
                }
                let mx = expo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut norm = 0.0;
                let mut mean = vec![0.0; k];
                for (e, x) in expo.iter().zip(pts) {
                    let q = (e - mx).exp();
                    norm += q;
                    mean.iter_mut().zip(x).for_each(|(m, xi)| *m += q * xi);
                }
                let c = wz * wx / norm;
                for i in 0..k {
                    for j in 0..k {
                        m[i * k + j] += c * mean[i] * big[j];
                    }
                }
            }
        }
        Ok(SymMatrix::from_row_major(k, &m)?.scale(0.5))
    }

    /// `φ(S) = ψ(λS^{∘(p−1)}) − λ(p−1)/(2p)·Σ_{ll'}(S^{∘p})_{ll'}`.
    pub fn phi(&self, s: &SymMatrix, p: usize, lambda: f64) -> Result<f64> {
        check_order_snr(p, lambda)?;
        let arg = s.hadamard_power(p as u32 - 1).scale(lambda);
        Ok(self.value(&arg)? - phi_penalty(s, p, lambda))
    }

    /// `∇φ(S) = λ(p−1)·[S^{∘(p−2)} ∘ ∇ψ(λS^{∘(p−1)}) − ½S^{∘(p−1)}]`.
    pub fn grad_phi(&self, s: &SymMatrix, p: usize, lambda: f64) -> Result<SymMatrix> {
        check_order_snr(p, lambda)?;
        let pp = p as u32;
        let g = self.gradient(&s.hadamard_power(pp - 1).scale(lambda))?;
        let inner = &s.hadamard_power(pp - 2).hadamard(&g) - &s.hadamard_power(pp - 1).scale(0.5);
        Ok(inner.scale(lambda * (p - 1) as f64))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_order_snr(p: usize, lambda: f64) -> Result<()> {
    if p < 2 {
        return Err(Error::InvalidParameter(format!("tensor order must be ≥ 2, got {p}")));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("λ must be positive, got {lambda}")));
    }
    Ok(())
}

fn phi_penalty(s: &SymMatrix, p: usize, lambda: f64) -> f64 {
    lambda * (p - 1) as f64 / (2 * p) as f64 * s.hadamard_power(p as u32).sum_entries()
}

/// `λ/(2p)·Σ_{ll'}(Σ_X^{∘p})_{ll'}`.
pub fn mi_offset(prior: &Prior, p: usize, lambda: f64) -> f64 {
    lambda / (2 * p) as f64 * prior.second_moment().0.hadamard_power(p as u32).sum_entries()
}

/// Polynomial `q^p − p·q·r^{p−1} + (p−1)·r^p`, evaluated in the factored form
/// `(q−r)²·Σ_{b<p−1} (b+1)·q^{p−2−b}·r^b` so that `h_p(r, r) = 0` exactly.
pub fn h_p(r: f64, q: f64, p: u32) -> f64 {
    assert!(p >= 2, "h_p needs p ≥ 2");
    let tail: f64 = (0..p - 1).map(|b| (b + 1) as f64 * q.powi((p - 2 - b) as i32) * r.powi(b as i32)).sum();
    (q - r).powi(2) * tail
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub quadrature: QuadratureSpec,
    pub tol: f64,
    pub max_iter: usize,
    pub random_starts: usize,
    pub grid_points: usize,
    pub cluster_tol: f64,
    pub seed: u64,
}

impl SolverConfig {
    pub fn for_prior(prior: &Prior) -> Self {
        Self {
            quadrature: QuadratureSpec::default_for(prior.k()),
            tol: 1e-8,
            max_iter: 5000,
            random_starts: 5,
            grid_points: 400,
            cluster_tol: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub phi: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalMax {
    pub s: SymMatrix,
    pub phi: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSolution {
    pub p: usize,
    pub lambda: f64,
    pub s_star: SymMatrix,
    pub phi_value: f64,
    pub mi_limit: f64,
    /// Projected-gradient norm at `s_star`.
    pub grad_norm: f64,
    pub converged: bool,
    pub hit_boundary: bool,
    pub exploratory: bool,
    pub local_maxima: Vec<LocalMax>,
    pub optimizer_trace: Vec<TraceEntry>,
}

struct Run {
    s: SymMatrix,
    phi: f64,
    grad_norm: f64,
    converged: bool,
    trace: Vec<TraceEntry>,
}

/// Projected gradient ascent of φ over `{S ≽ 0, ‖S‖_F ≤ radius}`.
pub struct ReplicaSolver<'a> {
    psi: &'a PsiEvaluator,
    p: usize,
    lambda: f64,
    radius: f64,
    config: &'a SolverConfig,
}

impl<'a> ReplicaSolver<'a> {
    pub fn new(psi: &'a PsiEvaluator, p: usize, lambda: f64, config: &'a SolverConfig) -> Result<Self> {
        check_order_snr(p, lambda)?;
        let sigma = psi.prior().second_moment().0;
        let radius = 4.0 * sigma.frobenius_norm() * (sigma.dim() as f64).sqrt();
        Ok(Self { psi, p, lambda, radius, config })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn phi(&self, s: &SymMatrix) -> Result<f64> {
        self.psi.phi(s, self.p, self.lambda)
    }

    pub fn project(&self, s: &SymMatrix) -> SymMatrix {
        let s = s.project_psd();
        let norm = s.frobenius_norm();
        if norm > self.radius {
            s.scale(self.radius / norm)
        } else {
            s
        }
    }

    fn projected_gradient_norm(&self, s: &SymMatrix, g: &SymMatrix) -> f64 {
        (&self.project(&(s + g)) - s).frobenius_norm()
    }

    fn ascend(&self, start: &SymMatrix) -> Result<Run> {
        let cfg = self.config;
        let mut s = self.project(start);
        let mut f = self.phi(&s)?;
        let mut step: f64 = 1.0;
        let mut trace = Vec::new();
        let mut restarts = 0;
        let mut prev: Option<(SymMatrix, SymMatrix)> = None;
        for iteration in 0..cfg.max_iter {
            let g = self.psi.grad_phi(&s, self.p, self.lambda)?;
            let pg = self.projected_gradient_norm(&s, &g);
            trace.push(TraceEntry { iteration, phi: f, grad_norm: pg });
            if pg <= cfg.tol {
                if restarts < 8 {
                    if let Some((s2, f2)) = self.escape(&s, f)? {
                        s = s2;
                        f = f2;
                        step = 1.0;
                        prev = None;
                        restarts += 1;
                        continue;
                    }
                }
                return Ok(Run { s, phi: f, grad_norm: pg, converged: true, trace });
            }
            let slack = 1e-14 * (1.0 + f.abs());
            // Barzilai–Borwein trial step where the local curvature is negative.
            let bb = prev.as_ref().and_then(|(ps, pgr)| {
                let ds = &s - ps;
                let dg = &g - pgr;
                let curv = ds.inner(&dg);
                (curv < 0.0).then(|| ds.inner(&ds) / -curv)
            });
            let mut eta = bb.unwrap_or(2.0 * step).min(1e6);
            prev = Some((s.clone(), g.clone()));
            let mut accepted = None;
            for _ in 0..80 {
                let cand = self.project(&(&s + &g.scale(eta)));
                let fc = self.phi(&cand)?;
                let decrease = g.inner(&(&cand - &s));
                if fc >= f + 1e-4 * decrease - slack {
                    accepted = Some((cand, fc));
                    break;
                }
                eta *= 0.5;
            }
            match accepted {
                Some((cand, fc)) => {
                    s = cand;
                    f = fc;
                    step = eta;
                }
                None => return Ok(Run { s, phi: f, grad_norm: pg, converged: false, trace }),
            }
        }
        let g = self.psi.grad_phi(&s, self.p, self.lambda)?;
        let pg = self.projected_gradient_norm(&s, &g);
        let converged = pg <= cfg.tol;
        trace.push(TraceEntry { iteration: cfg.max_iter, phi: f, grad_norm: pg });
        Ok(Run { s, phi: f, grad_norm: pg, converged, trace })
    }

    /// Probes feasible PSD directions around a stationary point and returns an
    /// improving point if one exists.
    fn escape(&self, s: &SymMatrix, f: f64) -> Result<Option<(SymMatrix, f64)>> {
        let k = s.dim();
        let delta = 1e-3 * (1.0 + self.radius);
        let mut dirs = Vec::new();
        for l in 0..k {
            for lp in l..k {
                let mut v = vec![0.0; k];
                v[l] = 1.0;
                v[lp] = 1.0;
                let outer: Vec<f64> = (0..k * k).map(|ij| v[ij / k] * v[ij % k]).collect();
                dirs.push(SymMatrix::from_row_major(k, &outer)?);
            }
        }
        dirs.push(self.psi.prior().second_moment().0);
        let mut best: Option<(SymMatrix, f64)> = None;
        for d in dirs {
            let n = d.frobenius_norm();
            if n == 0.0 {
                continue;
            }
            let cand = self.project(&(s + &d.scale(delta / n)));
            let fc = self.phi(&cand)?;
            if fc > f + 1e-12 && best.as_ref().is_none_or(|b| fc > b.1) {
                best = Some((cand, fc));
            }
        }
        Ok(best)
    }

    fn starts(&self, extra: &[SymMatrix]) -> Vec<SymMatrix> {
        let k = self.psi.prior().k();
        let sigma = self.psi.prior().second_moment().0;
        let mut starts = vec![SymMatrix::zeros(k), sigma.clone()];
        let scale = sigma.frobenius_norm();
        for i in 0..self.config.random_starts {
            let mut rng = derived_rng(self.config.seed, &[0x5747, i as u64]);
            let f = rng.random_range(0.1..1.5);
            starts.push(random_psd(k, f * scale, &mut rng));
        }
        starts.extend(extra.iter().cloned());
        if k == 1 && self.config.grid_points > 1 {
            let (s, _) = self.grid_argmax(self.config.grid_points);
            starts.push(s);
        }
        starts
    }

    /// Dense grid on `[0, Tr Σ_X]` (K = 1 only).
    pub fn grid_argmax(&self, points: usize) -> (SymMatrix, f64) {
        let top = self.psi.prior().second_moment().0.trace();
        let mut best = (SymMatrix::scalar(0.0), f64::NEG_INFINITY);
        for i in 0..points {
            let s = SymMatrix::scalar(top * i as f64 / (points - 1) as f64);
            if let Ok(v) = self.phi(&s) {
                if v > best.1 {
                    best = (s, v);
                }
            }
        }
        best
    }

    pub fn solve(&self, extra_starts: &[SymMatrix]) -> Result<ReplicaSolution> {
        let starts = self.starts(extra_starts);
        let runs: Vec<Run> = starts.par_iter().map(|s| self.ascend(s)).collect::<Result<_>>()?;
        // Near a degenerate maximum the gradient vanishes like ‖S‖^{p−1}, so the
        // tolerance only pins S down to about tol^{1/(p−1)}.
        let radius = self.config.cluster_tol.max(10.0 * self.config.tol.powf(1.0 / (self.p - 1) as f64));
        let mut maxima: Vec<LocalMax> = Vec::new();
        let mut best_idx = 0;
        for (i, r) in runs.iter().enumerate() {
            if r.phi > runs[best_idx].phi {
                best_idx = i;
            }
            match maxima.iter_mut().find(|m| (&m.s - &r.s).frobenius_norm() <= radius) {
                Some(m) => {
                    if r.phi > m.phi {
                        *m = LocalMax { s: r.s.clone(), phi: r.phi, grad_norm: r.grad_norm };
                    }
                }
                None => maxima.push(LocalMax { s: r.s.clone(), phi: r.phi, grad_norm: r.grad_norm }),
            }
        }
        maxima.sort_by(|a, b| b.phi.total_cmp(&a.phi));
        let best = &runs[best_idx];
        let mi_limit = mi_offset(self.psi.prior(), self.p, self.lambda) - best.phi;
        Ok(ReplicaSolution {
            p: self.p,
            lambda: self.lambda,
            s_star: best.s.clone(),
            phi_value: best.phi,
            mi_limit,
            grad_norm: best.grad_norm,
            converged: best.converged,
            hit_boundary: self.radius > 0.0 && best.s.frobenius_norm() >= self.radius * (1.0 - 1e-6),
            exploratory: self.p % 2 == 1,
            local_maxima: maxima,
            optimizer_trace: best.trace.clone(),
        })
    }
}

pub fn solve_replica(prior: &Prior, p: usize, lambda: f64, config: &SolverConfig) -> Result<ReplicaSolution> {
    let psi = PsiEvaluator::new(prior, config.quadrature)?;
    ReplicaSolver::new(&psi, p, lambda, config)?.solve(&[])
}

/// Solves along an ascending λ grid, warm-starting from the previous maximizer.
pub fn lambda_sweep(prior: &Prior, p: usize, grid: &[f64], config: &SolverConfig) -> Result<Vec<ReplicaSolution>> {
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("λ grid must be sorted ascending".into()));
    }
    let psi = PsiEvaluator::new(prior, config.quadrature)?;
    let mut out: Vec<ReplicaSolution> = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let warm: Vec<SymMatrix> = out.last().map(|s| vec![s.s_star.clone()]).unwrap_or_default();
        out.push(ReplicaSolver::new(&psi, p, lambda, config)?.solve(&warm)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn gh(n: usize) -> QuadratureSpec {
        QuadratureSpec::GaussHermite { nodes_per_dim: n }
    }

    /// `E ln cosh(s + √s Z) − s/2` by a trapezoid rule on a wide interval.
    fn rademacher_psi_oracle(s: f64) -> f64 {
        let h = 1e-3;
        let half = 14.0;
        let m = (2.0 * half / h) as usize;
        let mut acc = 0.0;
        for i in 0..=m {
            let z = -half + i as f64 * h;
            let u: f64 = s + s.sqrt() * z;
            let lc = u.abs() + (-2.0 * u.abs()).exp().ln_1p() - std::f64::consts::LN_2;
            let w = if i == 0 || i == m { 0.5 } else { 1.0 };
            acc += w * lc * (-0.5 * z * z).exp();
        }
        acc * h / (2.0 * std::f64::consts::PI).sqrt() - s / 2.0
    }

    #[test]
    fn psi_at_zero_vanishes() {
        for prior in [Prior::rademacher(), Prior::sparse(0.2).unwrap(), Prior::product_rademacher(2).unwrap()] {
            let psi = PsiEvaluator::with_default_quadrature(&prior);
            assert_eq!(psi.value(&SymMatrix::zeros(prior.k())).unwrap(), 0.0);
        }
    }

    #[test]
    fn psi_rademacher_matches_oracle() {
        let psi = PsiEvaluator::with_default_quadrature(&Prior::rademacher());
        for i in 1..=20 {
            let s = 0.1 * i as f64;
            let v = psi.value(&SymMatrix::scalar(s)).unwrap();
            let o = rademacher_psi_oracle(s);
            assert!((v - o).abs() <= 1e-10, "s={s} v={v} oracle={o}");
        }
    }

    #[test]
    fn gradient_examples() {
        let psi = PsiEvaluator::with_default_quadrature(&Prior::rademacher());
        assert!(psi.gradient(&SymMatrix::scalar(0.0)).unwrap().get(0, 0).abs() < 1e-15);
        let det = PsiEvaluator::with_default_quadrature(&Prior::deterministic(vec![1.0]).unwrap());
        for s in [0.0, 0.3, 2.0] {
            assert!((det.gradient(&SymMatrix::scalar(s)).unwrap().get(0, 0) - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_k2() {
        let prior = Prior::new(vec![
            (vec![1.0, 0.5], 0.3),
            (vec![-1.0, 0.2], 0.4),
            (vec![0.0, -1.2], 0.3),
        ])
        .unwrap();
        let psi = PsiEvaluator::new(&prior, gh(30)).unwrap();
        let mut rng = rng_from_seed(4);
        let h = 1e-5;
        for _ in 0..5 {
            let s = &random_psd(2, rng.random_range(0.3..2.0), &mut rng) + &SymMatrix::identity(2).scale(0.1);
            let g = psi.gradient(&s).unwrap();
            let mut fd = vec![0.0; 4];
            for l in 0..2 {
                for lp in l..2 {
                    let e = SymMatrix::unit(2, l, lp).scale(h);
                    let d = (psi.value(&(&s + &e)).unwrap() - psi.value(&(&s - &e)).unwrap()) / (2.0 * h);
                    // directional derivative along E^{(l,l')} is 2G_{ll'} off the diagonal
                    let v = if l == lp { d } else { d / 2.0 };
                    fd[l * 2 + lp] = v;
                    fd[lp * 2 + l] = v;
                }
            }
            let fd = SymMatrix::from_row_major(2, &fd).unwrap();
            let rel = (&fd - &g).frobenius_norm() / g.frobenius_norm();
            assert!(rel <= 1e-4, "rel {rel}");
        }
    }

    #[test]
    fn phi_examples() {
        let psi = PsiEvaluator::with_default_quadrature(&Prior::rademacher());
        assert_eq!(psi.phi(&SymMatrix::scalar(0.0), 2, 1.0).unwrap(), 0.0);
        let v = psi.phi(&SymMatrix::scalar(0.5), 2, 1.0).unwrap();
        let want = psi.value(&SymMatrix::scalar(0.5)).unwrap() - 0.0625;
        assert!((v - want).abs() < 1e-15);
        assert!(psi.phi(&SymMatrix::scalar(0.5), 2, 0.0).is_err());
    }

    #[test]
    fn grad_phi_matches_finite_differences() {
        let prior = Prior::product_rademacher(2).unwrap();
        let psi = PsiEvaluator::new(&prior, gh(24)).unwrap();
        let mut rng = rng_from_seed(9);
        let h = 1e-5;
        for p in [2usize, 3, 4] {
            let s = &random_psd(2, 0.8, &mut rng) + &SymMatrix::identity(2).scale(0.2);
            let g = psi.grad_phi(&s, p, 1.3).unwrap();
            for l in 0..2 {
                for lp in l..2 {
                    let e = SymMatrix::unit(2, l, lp).scale(h);
                    let d = (psi.phi(&(&s + &e), p, 1.3).unwrap() - psi.phi(&(&s - &e), p, 1.3).unwrap()) / (2.0 * h);
                    let want = if l == lp { g.get(l, lp) } else { 2.0 * g.get(l, lp) };
                    assert!((d - want).abs() <= 1e-4 * (1.0 + want.abs()), "p={p} d={d} want={want}");
                }
            }
        }
    }

    #[test]
    fn h_p_examples() {
        for p in 2..7 {
            for r in [-1.5, 0.0, 0.3, 2.0] {
                assert_eq!(h_p(r, r, p), 0.0);
            }
        }
        assert!((h_p(0.4, 1.7, 2) - (1.7f64 - 0.4).powi(2)).abs() < 1e-14);
        assert_eq!(h_p(-1.0, 0.0, 3), -2.0);
    }

    #[test]
    fn replica_below_threshold() {
        let prior = Prior::rademacher();
        let sol = solve_replica(&prior, 2, 0.5, &SolverConfig::for_prior(&prior)).unwrap();
        assert!(sol.s_star.get(0, 0).abs() < 1e-8);
        assert!(sol.phi_value.abs() < 1e-12);
        assert!((sol.mi_limit - 0.125).abs() < 1e-10);
        assert!(!sol.exploratory);
    }

    #[test]
    fn replica_above_threshold_matches_grid() {
        let prior = Prior::rademacher();
        let cfg = SolverConfig::for_prior(&prior);
        let sol = solve_replica(&prior, 2, 2.0, &cfg).unwrap();
        assert!(sol.s_star.get(0, 0) > 0.1);
        assert!(sol.phi_value > 0.0);
        assert!(sol.converged);
        let psi = PsiEvaluator::with_default_quadrature(&prior);
        let solver = ReplicaSolver::new(&psi, 2, 2.0, &cfg).unwrap();
        let (_, grid_best) = solver.grid_argmax(4000);
        assert!(sol.phi_value >= grid_best - 1e-6);
        assert!(sol.phi_value - grid_best < 1e-6);
    }

    #[test]
    fn deterministic_prior_mi_bounds() {
        let prior = Prior::deterministic(vec![1.0]).unwrap();
        for lambda in [0.3, 1.0, 3.0] {
            let sol = solve_replica(&prior, 2, lambda, &SolverConfig::for_prior(&prior)).unwrap();
            assert!(sol.mi_limit >= -1e-10 && sol.mi_limit <= lambda / 4.0 + 1e-12);
        }
    }

    #[test]
    fn sweep_is_monotone_and_flat_below_threshold() {
        let prior = Prior::rademacher();
        let grid: Vec<f64> = (1..=15).map(|i| 0.1 * i as f64).collect();
        let sols = lambda_sweep(&prior, 2, &grid, &SolverConfig::for_prior(&prior)).unwrap();
        for w in sols.windows(2) {
            assert!(w[1].mi_limit >= w[0].mi_limit - 2e-8);
        }
        for s in sols.iter().filter(|s| s.lambda <= 0.9 + 1e-12) {
            assert!((s.mi_limit - s.lambda / 4.0).abs() <= 1e-6);
        }
        assert!(lambda_sweep(&prior, 2, &[1.0, 0.5], &SolverConfig::for_prior(&prior)).is_err());
    }
}

//! Interpolating model between the tensor channel (`t = 0`) and decoupled
//! side channels (`t = 1`), the overlap-driven ODE path and the checks built
//! on it. Everything here works at unit SNR; rescale the prior first.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{hamiltonian, instance_from_disorder, overlap_flat, Disorder, Enumerator, GibbsEnsemble, SideChannel, TensorInstance};
use crate::prior::Prior;
use crate::replica::{h_p, PsiEvaluator};
use crate::stats::{simpson, MeanStderr};
use crate::symmat::SymMatrix;

/// One realization of the interpolating channel at `(t, R)`.
#[derive(Clone, Debug)]
pub struct InterpolatingInstance {
    /// Tensor channel at SNR `1 − t`.
    pub base: TensorInstance,
    pub t: f64,
    pub r: SymMatrix,
    /// Row-major `n×K`.
    pub y_tilde: Vec<f64>,
    pub z_tilde: Vec<f64>,
}

impl InterpolatingInstance {
    pub fn from_disorder(prior: &Prior, n: usize, p: usize, t: f64, r: &SymMatrix, seed: u64, d: &Disorder) -> Result<Self> {
        check_t(t)?;
        if r.dim() != prior.k() {
            return Err(Error::DimensionMismatch(format!("R is {0}x{0} but K={1}", r.dim(), prior.k())));
        }
        let base = instance_from_disorder(prior, n, p, 1.0 - t, seed, d);
        let side = SideChannel::new(r, &base.x, &d.z_tilde)?;
        Ok(Self { base, t, r: r.clone(), y_tilde: side.y_tilde, z_tilde: d.z_tilde.clone() })
    }

    pub fn side_channel(&self) -> Result<SideChannel> {
        let sqrt_r = self.r.sqrt_psd()?;
        Ok(SideChannel { r: self.r.clone(), sqrt_r, y_tilde: self.y_tilde.clone() })
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!("t must lie in [0,1], got {t}")));
    }
    Ok(())
}

/// Tensor part scaled by `1 − t` plus `Σ_j [½x_jᵀRx_j − Ỹ_jᵀ√R x_j]`.
pub fn interpolating_hamiltonian(x: &[Vec<f64>], inst: &InterpolatingInstance) -> Result<f64> {
    let tensor = hamiltonian(x, &inst.base)?;
    let sqrt_r = inst.r.sqrt_psd()?;
    let k = inst.r.dim();
    let side: f64 = x
        .iter()
        .enumerate()
        .map(|(j, xj)| {
            let yt = &inst.y_tilde[j * k..(j + 1) * k];
            let proj = sqrt_r.apply(xj);
            0.5 * inst.r.quad_form(xj, xj) - yt.iter().zip(&proj).map(|(a, b)| a * b).sum::<f64>()
        })
        .sum();
    Ok(tensor + side)
}

/// Bracket statistics of one disorder sample at `(t, R)`; matrices row-major `K×K`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSample {
    /// `(1/n) ln Z_{t,R}`.
    pub free_entropy: f64,
    /// `⟨Q⟩`.
    pub q: Vec<f64>,
    /// `⟨(Q_s − ⟨Q_s⟩)²⟩` with `Q_s = (Q + Qᵀ)/2`.
    pub qs_var: Vec<f64>,
    /// `⟨x⟩ᵀ⟨x⟩/n`.
    pub xx: Vec<f64>,
    /// `Σ_{ll'} ⟨Q_{ll'}^p⟩`.
    pub q_pow_sum: f64,
    /// `Σ_{ll'} ⟨h_p(S_{ll'}, Q_{ll'})⟩` when a reference `S` is supplied.
    pub h_sum: Option<f64>,
}

impl PointSample {
    /// `Δ_{ll'}` contribution of this sample.
    pub fn delta(&self) -> Vec<f64> {
        let k = (self.q.len() as f64).sqrt() as usize;
        (0..k * k)
            .map(|ij| {
                let (l, lp) = (ij / k, ij % k);
                let qs = 0.5 * (self.q[l * k + lp] + self.q[lp * k + l]);
                self.qs_var[ij] - (qs - self.xx[ij]).powi(2)
            })
            .collect()
    }
}

/// Monte Carlo over disorder with exact enumeration of every posterior.
#[derive(Debug)]
pub struct Interpolator {
    enumerator: Enumerator,
    sigma: SymMatrix,
}

impl Interpolator {
    pub fn new(prior: &Prior, n: usize, p: usize, budget: u64) -> Result<Self> {
        Ok(Self { enumerator: Enumerator::new(prior, n, p, budget)?, sigma: prior.second_moment().0 })
    }

    pub fn prior(&self) -> &Prior {
        self.enumerator.prior()
    }

    pub fn n(&self) -> usize {
        self.enumerator.n()
    }

    pub fn p(&self) -> usize {
        self.enumerator.p()
    }

    pub fn k(&self) -> usize {
        self.enumerator.k()
    }

    pub fn enumerator(&self) -> &Enumerator {
        &self.enumerator
    }

    pub fn sigma(&self) -> &SymMatrix {
        &self.sigma
    }

    pub fn disorder(&self, seed: u64, index: u64) -> Disorder {
        Disorder::for_sample(self.prior(), self.n(), self.p(), seed, index)
    }

    pub fn instance(&self, t: f64, r: &SymMatrix, seed: u64, index: u64) -> Result<InterpolatingInstance> {
        InterpolatingInstance::from_disorder(self.prior(), self.n(), self.p(), t, r, seed, &self.disorder(seed, index))
    }

    /// Exact posterior of an interpolating instance, plus the planted signal (row-major).
    pub fn ensemble(&self, inst: &InterpolatingInstance) -> Result<(GibbsEnsemble<'_>, Vec<f64>)> {
        let big_x: Vec<f64> = inst.base.x.iter().flatten().copied().collect();
        let side = if inst.r.frobenius_norm() == 0.0 { None } else { Some(inst.side_channel()?) };
        Ok((self.enumerator.gibbs(inst.base.coefficient(), &inst.base.y, side.as_ref()), big_x))
    }

    pub fn point_sample(&self, t: f64, r: &SymMatrix, s_ref: Option<&SymMatrix>, seed: u64, index: u64) -> Result<PointSample> {
        let inst = self.instance(t, r, seed, index)?;
        let (g, big_x) = self.ensemble(&inst)?;
        let (n, k, p) = (self.n(), self.k(), self.p() as i32);
        let mut q = vec![0.0; k * k];
        let mut qs2 = vec![0.0; k * k];
        let mut q_pow_sum = 0.0;
        let mut h = 0.0;
        for (c, &pc) in g.probs.iter().enumerate() {
            if pc == 0.0 {
                continue;
            }
            let qc = overlap_flat(self.enumerator.config(c), &big_x, n, k);
            for l in 0..k {
                for lp in 0..k {
                    let v = qc[l * k + lp];
                    q[l * k + lp] += pc * v;
                    let s = 0.5 * (v + qc[lp * k + l]);
                    qs2[l * k + lp] += pc * s * s;
                    q_pow_sum += pc * v.powi(p);
                    if let Some(sr) = s_ref {
                        h += pc * h_p(sr.get(l, lp), v, p as u32);
                    }
                }
            }
        }
        let mx = g.mean_x();
        let xx = overlap_flat(&mx, &mx, n, k);
        let qs_var = (0..k * k)
            .map(|ij| {
                let (l, lp) = (ij / k, ij % k);
                qs2[ij] - (0.5 * (q[l * k + lp] + q[lp * k + l])).powi(2)
            })
            .collect();
        Ok(PointSample {
            free_entropy: g.log_partition / n as f64,
            q,
            qs_var,
            xx,
            q_pow_sum,
            h_sum: s_ref.map(|_| h),
        })
    }

    /// Samples `0..n_disorder` in order, evaluated in parallel.
    pub fn batch(&self, t: f64, r: &SymMatrix, s_ref: Option<&SymMatrix>, n_disorder: usize, seed: u64) -> Result<Vec<PointSample>> {
        check_t(t)?;
        (0..n_disorder as u64).into_par_iter().map(|i| self.point_sample(t, r, s_ref, seed, i)).collect()
    }

    /// `E⟨Q⟩_{t,R}`, symmetrized, with entrywise standard errors and the
    /// largest asymmetry of the raw estimate.
    pub fn gibbs_mean_overlap(&self, t: f64, r: &SymMatrix, n_disorder: usize, seed: u64) -> Result<OverlapEstimate> {
        Ok(OverlapEstimate::from_samples(&self.batch(t, r, None, n_disorder, seed)?, self.k()))
    }

    /// Vector field `G_n(t, R) = E⟨Q⟩^{∘(p−1)}` with the PSD projection applied to `E⟨Q⟩`.
    pub fn vector_field(&self, t: f64, r: &SymMatrix, est: &Estimator) -> Result<FieldValue> {
        let o = self.gibbs_mean_overlap(t, r, est.n_disorder, est.seed)?;
        let projected = o.mean.project_psd();
        let distance = (&projected - &o.mean).frobenius_norm();
        let noise = o.stderr.frobenius_norm();
        if distance > 1e-12 && distance > 10.0 * noise {
            return Err(Error::EstimatorTooNoisy(format!(
                "PSD projection moved E<Q> by {distance:.3e} at t={t}, more than 10x its standard error {noise:.3e}; raise the disorder count"
            )));
        }
        Ok(FieldValue { field: projected.hadamard_power(self.p() as u32 - 1), overlap: o, projection: distance })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapEstimate {
    pub mean: SymMatrix,
    pub stderr: SymMatrix,
    pub asymmetry: f64,
}

impl OverlapEstimate {
    pub fn from_samples(samples: &[PointSample], k: usize) -> Self {
        let sym: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| (0..k * k).map(|ij| 0.5 * (s.q[ij] + s.q[(ij % k) * k + ij / k])).collect())
            .collect();
        let cols = crate::stats::columnwise(&sym);
        let raw = crate::stats::columnwise(&samples.iter().map(|s| s.q.clone()).collect::<Vec<_>>());
        let asymmetry = (0..k * k).map(|ij| (raw[ij].mean - raw[(ij % k) * k + ij / k].mean).abs()).fold(0.0, f64::max);
        Self {
            mean: SymMatrix::from_row_major(k, &cols.iter().map(|c| c.mean).collect::<Vec<_>>()).expect("K×K"),
            stderr: SymMatrix::from_row_major(k, &cols.iter().map(|c| c.stderr).collect::<Vec<_>>()).expect("K×K"),
            asymmetry,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FieldValue {
    pub field: SymMatrix,
    pub overlap: OverlapEstimate,
    pub projection: f64,
}

/// Disorder batch used to estimate Gibbs expectations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Estimator {
    pub n_disorder: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub t: f64,
    pub r: SymMatrix,
    /// `R'(t) = G_n(t, R(t))`.
    pub field: SymMatrix,
    pub q_stderr: SymMatrix,
    pub projection: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationPath {
    pub n: usize,
    pub p: usize,
    pub epsilon: SymMatrix,
    pub steps: usize,
    pub estimator: Estimator,
    pub points: Vec<PathPoint>,
}

impl InterpolationPath {
    pub fn step(&self) -> f64 {
        1.0 / self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn end(&self) -> &SymMatrix {
        &self.points.last().expect("nonempty path").r
    }

    pub fn max_projection(&self) -> f64 {
        self.points.iter().map(|p| p.projection).fold(0.0, f64::max)
    }

    /// `(R(t), R'(t))` by cubic Hermite interpolation between grid points.
    pub fn at(&self, t: f64) -> (SymMatrix, SymMatrix) {
        let h = self.step();
        let i = ((t / h).floor() as usize).min(self.steps - 1);
        let (a, b) = (&self.points[i], &self.points[i + 1]);
        let s = ((t - a.t) / h).clamp(0.0, 1.0);
        let (s2, s3) = (s * s, s * s * s);
        let r = &(&a.r.scale(2.0 * s3 - 3.0 * s2 + 1.0) + &a.field.scale(h * (s3 - 2.0 * s2 + s)))
            + &(&b.r.scale(-2.0 * s3 + 3.0 * s2) + &b.field.scale(h * (s3 - s2)));
        let d = &(&a.r.scale((6.0 * s2 - 6.0 * s) / h) + &a.field.scale(3.0 * s2 - 4.0 * s + 1.0))
            + &(&b.r.scale((-6.0 * s2 + 6.0 * s) / h) + &b.field.scale(3.0 * s2 - 2.0 * s));
        (r, d)
    }

    /// CSV rows: `t`, R entries, stderr entries (row-major).
    pub fn to_csv(&self) -> String {
        let k = self.epsilon.dim();
        let mut out = String::from("t");
        for name in ["R", "stderr"] {
            for l in 0..k {
                for lp in 0..k {
                    out.push_str(&format!(",{name}_{l}{lp}"));
                }
            }
        }
        out.push('\n');
        for pt in &self.points {
            out.push_str(&crate::fmt_f64(pt.t));
            for v in pt.r.row_major().into_iter().chain(pt.q_stderr.row_major()) {
                out.push(',');
                out.push_str(&crate::fmt_f64(v));
            }
            out.push('\n');
        }
        out
    }
}

/// Classical RK4 on `R' = E⟨Q⟩^{∘(p−1)}`, `R(0) = ε`. All stages share one
/// disorder batch, so the integrated field is a smooth sample average.
pub fn solve_interpolation_ode(interp: &Interpolator, epsilon: &SymMatrix, steps: usize, est: &Estimator) -> Result<InterpolationPath> {
    if steps == 0 {
        return Err(Error::InvalidParameter("need at least one ODE step".into()));
    }
    if epsilon.dim() != interp.k() || !epsilon.is_psd(1e-12) {
        return Err(Error::InvalidParameter("ε must be a K×K PSD matrix".into()));
    }
    let h = 1.0 / steps as f64;
    let mut r = epsilon.clone();
    let mut points = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let t = i as f64 * h;
        let k1 = interp.vector_field(t, &r, est)?;
        points.push(PathPoint { t, r: r.clone(), field: k1.field.clone(), q_stderr: k1.overlap.stderr.clone(), projection: k1.projection });
        if i == steps {
            break;
        }
        let mut projection = k1.projection;
        let mut stage = |tt: f64, rr: &SymMatrix| -> Result<SymMatrix> {
            let v = interp.vector_field(tt, &rr.project_psd(), est)?;
            projection = projection.max(v.projection);
            Ok(v.field)
        };
        let k2 = stage(t + 0.5 * h, &(&r + &k1.field.scale(0.5 * h)))?;
        let k3 = stage(t + 0.5 * h, &(&r + &k2.scale(0.5 * h)))?;
        let k4 = stage(t + h, &(&r + &k3.scale(h)))?;
        let incr = &(&k1.field + &k2.scale(2.0)) + &(&k3.scale(2.0) + &k4);
        r = (&r + &incr.scale(h / 6.0)).project_psd();
        points.last_mut().expect("pushed").projection = projection;
    }
    Ok(InterpolationPath { n: interp.n(), p: interp.p(), epsilon: epsilon.clone(), steps, estimator: *est, points })
}

/// Residual budget of a check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub eps_term: f64,
    pub one_over_n: f64,
    pub mc_3sigma: f64,
}

impl Budget {
    pub fn total(&self) -> f64 {
        self.eps_term + self.one_over_n + self.mc_3sigma
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub value_lhs: f64,
    pub value_rhs: f64,
    pub residual: f64,
    pub stderr: f64,
    pub budget: Budget,
    pub pass: bool,
}

impl CheckReport {
    pub fn new(name: &str, lhs: f64, rhs: f64, stderr: f64, budget: Budget) -> Self {
        let residual = lhs - rhs;
        let pass = residual.abs() <= budget.total();
        Self { name: name.into(), value_lhs: lhs, value_rhs: rhs, residual, stderr, budget, pass }
    }
}

fn free_entropy_samples(interp: &Interpolator, t: f64, r: &SymMatrix, est: &Estimator) -> Result<Vec<f64>> {
    Ok(interp.batch(t, r, None, est.n_disorder, est.seed)?.into_iter().map(|s| s.free_entropy).collect())
}

/// Per-sample `Σ⟨Q^p⟩ − p·Σ R'_{ll'}⟨Q_{ll'}⟩` at every grid point of the path.
fn sum_rule_integrands(interp: &Interpolator, path: &InterpolationPath, est: &Estimator) -> Result<Vec<Vec<f64>>> {
    let p = interp.p() as f64;
    let k = interp.k();
    path.points
        .iter()
        .map(|pt| {
            let rp = pt.field.row_major();
            Ok(interp
                .batch(pt.t, &pt.r, None, est.n_disorder, est.seed)?
                .iter()
                .map(|s| s.q_pow_sum - p * (0..k * k).map(|ij| rp[ij] * s.q[ij]).sum::<f64>())
                .collect())
        })
        .collect()
}

/// Compares `f_n` with `ψ(R(1)) + (1/2p)∫Σ[E⟨Q^p⟩ − p·R'·E⟨Q⟩]dt` on common disorder.
pub fn sum_rule_check(interp: &Interpolator, path: &InterpolationPath, psi: &PsiEvaluator, est: &Estimator) -> Result<CheckReport> {
    if path.n != interp.n() || path.p != interp.p() || psi.prior().k() != interp.k() {
        return Err(Error::Mismatch("path, interpolator and ψ evaluator disagree".into()));
    }
    let p = interp.p() as f64;
    let lhs = free_entropy_samples(interp, 0.0, &SymMatrix::zeros(interp.k()), est)?;
    let integrands = sum_rule_integrands(interp, path, est)?;
    let (psi_end, quad_err) = psi.value_with_error(path.end())?;
    let residuals: Vec<f64> = (0..est.n_disorder)
        .map(|i| {
            let col: Vec<f64> = integrands.iter().map(|row| row[i]).collect();
            lhs[i] - (psi_end + simpson(&col, path.step()) / (2.0 * p))
        })
        .collect();
    let res = MeanStderr::from_samples(&residuals);
    let lhs_mean = MeanStderr::from_samples(&lhs).mean;
    let budget = Budget {
        eps_term: interp.sigma().trace() * path.epsilon.frobenius_norm() / 2.0,
        one_over_n: 5.0 / interp.n() as f64,
        mc_3sigma: 3.0 * (res.stderr + quad_err),
    };
    Ok(CheckReport::new("sum_rule", lhs_mean, lhs_mean - res.mean, res.stderr, budget))
}

/// `f_n(1, ε)` against `ψ(R(1))`, and `f_n(0, ε)` against `f_n` (paired).
pub fn endpoint_checks(interp: &Interpolator, path: &InterpolationPath, psi: &PsiEvaluator, est: &Estimator) -> Result<[CheckReport; 2]> {
    let k = interp.k();
    let end = MeanStderr::from_samples(&free_entropy_samples(interp, 1.0, path.end(), est)?);
    let (psi_end, quad_err) = psi.value_with_error(path.end())?;
    let decoupled = CheckReport::new(
        "endpoint_t1",
        end.mean,
        psi_end,
        end.stderr,
        Budget { eps_term: 0.0, one_over_n: 0.0, mc_3sigma: 3.0 * (end.stderr + quad_err) },
    );
    let start = free_entropy_samples(interp, 0.0, &path.epsilon, est)?;
    let plain = free_entropy_samples(interp, 0.0, &SymMatrix::zeros(k), est)?;
    let d = MeanStderr::from_samples(&start.iter().zip(&plain).map(|(a, b)| a - b).collect::<Vec<_>>());
    let lhs = MeanStderr::from_samples(&start).mean;
    let perturbed = CheckReport::new(
        "endpoint_t0",
        lhs,
        lhs - d.mean,
        d.stderr,
        Budget {
            eps_term: interp.sigma().trace() * path.epsilon.frobenius_norm() / 2.0,
            one_over_n: 0.0,
            mc_3sigma: 3.0 * d.stderr,
        },
    );
    Ok([decoupled, perturbed])
}

/// Linear path `R(t) = t·S^{∘(p−1)}`, `ε = 0`: the sum-rule right side computed
/// both from `(E⟨Q^p⟩, E⟨Q⟩)` and from `φ_p(S) + (1/2p)∫ΣE⟨h_p(S, Q)⟩`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearPathReport {
    pub f_n: MeanStderr,
    pub rhs_sum_rule: f64,
    pub rhs_h_form: f64,
    pub phi: f64,
    pub h_integral: f64,
    pub decomposition_gap: f64,
    pub check: CheckReport,
}

pub fn linear_path_sum_rule(interp: &Interpolator, s: &SymMatrix, psi: &PsiEvaluator, steps: usize, est: &Estimator) -> Result<LinearPathReport> {
    if steps == 0 || !steps.is_multiple_of(2) {
        return Err(Error::InvalidParameter("linear path needs an even, positive step count".into()));
    }
    let p = interp.p();
    let pf = p as f64;
    let k = interp.k();
    let target = s.hadamard_power(p as u32 - 1);
    let tp = target.row_major();
    let mut a_rows = Vec::with_capacity(steps + 1);
    let mut h_rows = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let batch = interp.batch(t, &target.scale(t), Some(s), est.n_disorder, est.seed)?;
        let a: Vec<f64> = batch.iter().map(|b| b.q_pow_sum - pf * (0..k * k).map(|ij| tp[ij] * b.q[ij]).sum::<f64>()).collect();
        let h: Vec<f64> = batch.iter().map(|b| b.h_sum.expect("reference supplied")).collect();
        a_rows.push(MeanStderr::from_samples(&a).mean);
        h_rows.push(MeanStderr::from_samples(&h).mean);
    }
    let step = 1.0 / steps as f64;
    let (psi_end, quad_err) = psi.value_with_error(&target)?;
    let rhs_sum_rule = psi_end + simpson(&a_rows, step) / (2.0 * pf);
    let phi = psi_end - (pf - 1.0) / (2.0 * pf) * s.hadamard_power(p as u32).sum_entries();
    let h_integral = simpson(&h_rows, step) / (2.0 * pf);
    let rhs_h_form = phi + h_integral;
    let f = MeanStderr::from_samples(&free_entropy_samples(interp, 0.0, &SymMatrix::zeros(k), est)?);
    let budget = Budget { eps_term: 0.0, one_over_n: 5.0 / interp.n() as f64, mc_3sigma: 3.0 * (f.stderr + quad_err) };
    let check = CheckReport::new("linear_path_sum_rule", f.mean, rhs_h_form, f.stderr, budget);
    Ok(LinearPathReport {
        f_n: f,
        rhs_sum_rule,
        rhs_h_form,
        phi,
        h_integral,
        decomposition_gap: (rhs_sum_rule - rhs_h_form).abs(),
        check,
    })
}

/// Central finite difference of `f_n(t, R(t))` against
/// `−(1/2p)ΣE⟨Q^p⟩ + ½Tr(R'·E⟨Q⟩)`, paired per disorder sample.
pub fn free_entropy_t_derivative_check(interp: &Interpolator, path: &InterpolationPath, t: f64, h: f64, est: &Estimator) -> Result<CheckReport> {
    if !(t > 0.0 && t < 1.0) || !(h > 0.0) || t - h < 0.0 || t + h > 1.0 {
        return Err(Error::InvalidParameter(format!("need 0 < t−h < t+h < 1, got t={t}, h={h}")));
    }
    let k = interp.k();
    let p = interp.p() as f64;
    let (r0, rp) = path.at(t);
    let (rm, _) = path.at(t - h);
    let (rpl, _) = path.at(t + h);
    let rpv = rp.row_major();
    let mid = interp.batch(t, &r0.project_psd(), None, est.n_disorder, est.seed)?;
    let lo = free_entropy_samples(interp, t - h, &rm.project_psd(), est)?;
    let hi = free_entropy_samples(interp, t + h, &rpl.project_psd(), est)?;
    let fd: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| (b - a) / (2.0 * h)).collect();
    let formula: Vec<f64> = mid
        .iter()
        .map(|s| -s.q_pow_sum / (2.0 * p) + 0.5 * (0..k * k).map(|ij| rpv[ij] * s.q[ij]).sum::<f64>())
        .collect();
    let diff: Vec<f64> = fd.iter().zip(&formula).map(|(a, b)| a - b).collect();
    let d = MeanStderr::from_samples(&diff);
    let lhs = MeanStderr::from_samples(&fd).mean;
    let budget = Budget { eps_term: 0.0, one_over_n: 1.0 / interp.n() as f64, mc_3sigma: 3.0 * d.stderr };
    Ok(CheckReport::new(&format!("t_derivative@{t}"), lhs, lhs - d.mean, d.stderr, budget))
}

/// `f_n(t, R)` on a t-grid at fixed `R`, with paired differences between
/// consecutive grid points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TScan {
    pub t: Vec<f64>,
    pub f: Vec<MeanStderr>,
    pub step_diff: Vec<MeanStderr>,
    pub decreasing: bool,
}

pub fn free_entropy_t_scan(interp: &Interpolator, r: &SymMatrix, grid: &[f64], est: &Estimator) -> Result<TScan> {
    let samples: Vec<Vec<f64>> = grid.iter().map(|&t| free_entropy_samples(interp, t, r, est)).collect::<Result<_>>()?;
    let f: Vec<MeanStderr> = samples.iter().map(|s| MeanStderr::from_samples(s)).collect();
    let step_diff: Vec<MeanStderr> = samples
        .windows(2)
        .map(|w| MeanStderr::from_samples(&w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect::<Vec<_>>()))
        .collect();
    let decreasing = step_diff.iter().all(|d| d.mean <= 2.0 * d.stderr);
    Ok(TScan { t: grid.to_vec(), f, step_diff, decreasing })
}

/// Divergence of `G_n` at `(t, R)`: `n(p−1)Σ_{ll'} E⟨Q_{ll'}⟩^{p−2} Δ_{ll'}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceEstimate {
    pub t: f64,
    pub r: SymMatrix,
    pub value: f64,
    pub stderr: f64,
    pub delta: SymMatrix,
    pub delta_stderr: SymMatrix,
    /// Second expectation of Δ (Jensen side), entrywise.
    pub jensen_lower: SymMatrix,
    /// First expectation of Δ, entrywise.
    pub jensen_upper: SymMatrix,
}

pub fn divergence_gn(interp: &Interpolator, t: f64, r: &SymMatrix, est: &Estimator) -> Result<DivergenceEstimate> {
    let k = interp.k();
    let (n, p) = (interp.n() as f64, interp.p() as i32);
    let batch = interp.batch(t, r, None, est.n_disorder, est.seed)?;
    let overlap = OverlapEstimate::from_samples(&batch, k);
    // (E⟨Q_ll'⟩^{p−2} + E⟨Q_l'l⟩^{p−2})/2: the upper-triangular divergence written as
    // half the full sum plus half its transpose.
    let weights: Vec<f64> = (0..k * k).map(|ij| overlap.mean.get(ij / k, ij % k).powi(p - 2)).collect();
    let deltas: Vec<Vec<f64>> = batch.iter().map(PointSample::delta).collect();
    let per_sample: Vec<f64> = deltas
        .iter()
        .map(|d| {
            let full: f64 = (0..k * k).map(|ij| weights[ij] * d[ij]).sum();
            let transposed: f64 = (0..k * k).map(|ij| weights[(ij % k) * k + ij / k] * d[ij]).sum();
            n * (p - 1) as f64 * 0.5 * (full + transposed)
        })
        .collect();
    let v = MeanStderr::from_samples(&per_sample);
    let cols = crate::stats::columnwise(&deltas);
    let upper = crate::stats::columnwise(&batch.iter().map(|b| b.qs_var.clone()).collect::<Vec<_>>());
    let lower: Vec<f64> = (0..k * k).map(|ij| upper[ij].mean - cols[ij].mean).collect();
    let mat = |v: Vec<f64>| SymMatrix::from_row_major(k, &v).expect("K×K");
    Ok(DivergenceEstimate {
        t,
        r: r.clone(),
        value: v.mean,
        stderr: v.stderr,
        delta: mat(cols.iter().map(|c| c.mean).collect()),
        delta_stderr: mat(cols.iter().map(|c| c.stderr).collect()),
        jensen_lower: mat(lower),
        jensen_upper: mat(upper.iter().map(|c| c.mean).collect()),
    })
}

/// `det J = exp ∫_0^t divergence` along a path, with prefix values at every grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleReport {
    pub t: Vec<f64>,
    pub divergence: Vec<f64>,
    pub divergence_stderr: Vec<f64>,
    pub determinant: Vec<f64>,
    pub final_determinant: f64,
    pub nondecreasing: bool,
}

pub fn jacobian_det_liouville(path: &InterpolationPath, divergence: &[f64], divergence_stderr: &[f64]) -> Result<LiouvilleReport> {
    if divergence.len() != path.points.len() || divergence_stderr.len() != divergence.len() {
        return Err(Error::Mismatch("one divergence value per path grid point is required".into()));
    }
    let h = path.step();
    let mut det = vec![1.0];
    let mut acc = 0.0;
    for i in 1..divergence.len() {
        // Simpson on pairs of intervals, trapezoid for a trailing odd one.
        if i % 2 == 0 {
            acc += h / 3.0 * (divergence[i - 2] + 4.0 * divergence[i - 1] + divergence[i]);
            det.push(acc.exp());
        } else {
            let half = acc + 0.5 * h * (divergence[i - 1] + divergence[i]);
            det.push(half.exp());
        }
    }
    let nondecreasing = det.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
    let total = if divergence.len() % 2 == 1 { simpson(divergence, h) } else { det.last().copied().unwrap_or(1.0).ln() };
    Ok(LiouvilleReport {
        t: path.times(),
        divergence: divergence.to_vec(),
        divergence_stderr: divergence_stderr.to_vec(),
        final_determinant: total.exp(),
        determinant: det,
        nondecreasing,
    })
}

/// Divergence at every grid point of a path.
pub fn path_divergence(interp: &Interpolator, path: &InterpolationPath, est: &Estimator) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut v = Vec::with_capacity(path.points.len());
    let mut e = Vec::with_capacity(path.points.len());
    for pt in &path.points {
        let d = divergence_gn(interp, pt.t, &pt.r, est)?;
        v.push(d.value);
        e.push(d.stderr);
    }
    Ok((v, e))
}

/// `⟨𝓛_{ll'}⟩`, `⟨𝓛_{ll'}²⟩` and the ingredients of the derivative identity
/// for one disorder sample.
#[derive(Clone, Debug, PartialEq)]
pub struct LSample {
    pub mean: f64,
    pub second_moment: f64,
    pub q: f64,
    /// `−(1/n)Σ_j ⟨x_j⟩ᵀ (∂²√R/∂R_{ll'}²) Z̃_j`.
    pub dl_direct: f64,
    /// `Tr(D(Σ_X − ⟨Q⟩_s)D)` with `D = ∂√R/∂R_{ll'}`.
    pub dl_formula: f64,
}

/// `𝓛_{ll'}(x) = (1/n)Σ_j [½x_jᵀEx_j − X_jᵀEx_j − x_jᵀ D Z̃_j]` over the exact ensemble.
pub fn compute_l(interp: &Interpolator, inst: &InterpolatingInstance, l: usize, lp: usize) -> Result<LSample> {
    let k = interp.k();
    let n = interp.n();
    let d1 = inst.r.dsqrt(l, lp)?;
    let d2 = inst.r.d2sqrt(l, lp)?;
    let e = SymMatrix::unit(k, l, lp);
    let (g, big_x) = interp.ensemble(inst)?;
    let zt = &inst.z_tilde;
    let mut mean = 0.0;
    let mut second = 0.0;
    let mut q = 0.0;
    for (c, &pc) in g.probs.iter().enumerate() {
        if pc == 0.0 {
            continue;
        }
        let x = interp.enumerator().config(c);
        let mut val = 0.0;
        for j in 0..n {
            let xj = &x[j * k..(j + 1) * k];
            let bj = &big_x[j * k..(j + 1) * k];
            let zj = &zt[j * k..(j + 1) * k];
            val += 0.5 * e.quad_form(xj, xj) - e.quad_form(bj, xj) - d1.quad_form(xj, zj);
            q += pc * xj[l] * bj[lp] / n as f64;
        }
        val /= n as f64;
        mean += pc * val;
        second += pc * val * val;
    }
    let mx = g.mean_x();
    let dl_direct = -(0..n).map(|j| d2.quad_form(&mx[j * k..(j + 1) * k], &zt[j * k..(j + 1) * k])).sum::<f64>() / n as f64;
    let qm = SymMatrix::from_row_major(k, &overlap_flat(&mx, &big_x, n, k))?;
    let inner = interp.sigma() - &qm;
    let dl_formula = (d1.as_matrix() * inner.as_matrix() * d1.as_matrix()).trace();
    Ok(LSample { mean, second_moment: second, q, dl_direct, dl_formula })
}

/// Paired checks of `E⟨𝓛⟩ = −(1−δ/2)E⟨Q_{ll'}⟩` and `E⟨∂𝓛/∂R⟩ = Tr(D(Σ_X − E⟨Q⟩)D)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LIdentityReport {
    pub t: f64,
    pub l: usize,
    pub lp: usize,
    pub mean_l: MeanStderr,
    pub mean_q: MeanStderr,
    pub identity_gap: MeanStderr,
    pub derivative_gap: MeanStderr,
    pub l_variance: f64,
    pub pass: bool,
}

pub fn l_identities(interp: &Interpolator, t: f64, r: &SymMatrix, l: usize, lp: usize, est: &Estimator) -> Result<LIdentityReport> {
    let samples: Vec<LSample> = (0..est.n_disorder as u64)
        .into_par_iter()
        .map(|i| compute_l(interp, &interp.instance(t, r, est.seed, i)?, l, lp))
        .collect::<Result<_>>()?;
    let c = if l == lp { 0.5 } else { 1.0 };
    let ml = MeanStderr::from_samples(&samples.iter().map(|s| s.mean).collect::<Vec<_>>());
    let mq = MeanStderr::from_samples(&samples.iter().map(|s| s.q).collect::<Vec<_>>());
    let gap = MeanStderr::from_samples(&samples.iter().map(|s| s.mean + c * s.q).collect::<Vec<_>>());
    let dgap = MeanStderr::from_samples(&samples.iter().map(|s| s.dl_direct - s.dl_formula).collect::<Vec<_>>());
    let var = MeanStderr::from_samples(&samples.iter().map(|s| s.second_moment - s.mean * s.mean).collect::<Vec<_>>()).mean;
    let ok = |m: &MeanStderr| m.mean.abs() <= 3.0 * m.stderr + 1e-12;
    Ok(LIdentityReport { t, l, lp, pass: ok(&gap) && ok(&dgap), mean_l: ml, mean_q: mq, identity_gap: gap, derivative_gap: dgap, l_variance: var })
}

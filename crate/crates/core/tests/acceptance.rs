//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//! Run alone with `cargo test --release --test acceptance`.

use std::process::{Command, ExitCode, Stdio};
use std::time::Instant;

use rand::Rng;
use trl::diagnostics::{free_entropy_variance_scan, nishimori_suite, overlap_fluctuation_scan, psi_shape_suite};
use trl::interpolation::{
    divergence_gn, free_entropy_t_derivative_check, jacobian_det_liouville, l_identities, path_divergence, solve_interpolation_ode,
    sum_rule_check, Estimator, Interpolator,
};
use trl::model::{oracle_estimate, OracleEstimate, DEFAULT_BUDGET};
use trl::rng::derived_rng;
use trl::symmat::random_psd;
use trl::{h_p, solve_replica, Prior, PsiEvaluator, SolverConfig, SymMatrix};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Independent closed form for K = 1 Rademacher:
/// `−s/2 + E ln cosh(s + √s Z)` by composite Simpson on `[−12, 12]`.
fn rademacher_psi_simpson(s: f64) -> f64 {
    let m = 40_000;
    let (a, b) = (-12.0f64, 12.0f64);
    let h = (b - a) / m as f64;
    let f = |z: f64| {
        let u = s + s.sqrt() * z;
        let lncosh = u.abs() + (-2.0 * u.abs()).exp().ln_1p() - std::f64::consts::LN_2;
        lncosh * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
    };
    let mut acc = f(a) + f(b);
    for i in 1..m {
        acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    -s / 2.0 + acc * h / 3.0
}

fn c1_psi_exactness() -> Outcome {
    let priors = vec![
        Prior::rademacher(),
        Prior::sparse(0.1).unwrap(),
        Prior::sparse(0.5).unwrap(),
        Prior::product_rademacher(2).unwrap(),
        Prior::product_rademacher(3).unwrap(),
        Prior::deterministic(vec![1.5]).unwrap(),
        Prior::deterministic(vec![0.3, -0.2]).unwrap(),
        Prior::new(vec![(vec![1.0], 0.3), (vec![-0.4], 0.7)]).unwrap(),
        Prior::new(vec![(vec![1.0, 0.0], 0.5), (vec![0.0, 1.0], 0.25), (vec![-1.0, 2.0], 0.25)]).unwrap(),
        Prior::new(vec![(vec![0.0], 0.2), (vec![2.0], 0.3), (vec![-1.0], 0.5)]).unwrap(),
    ];
    let zero_max = priors
        .iter()
        .map(|p| PsiEvaluator::with_default_quadrature(p).value(&SymMatrix::zeros(p.k())).unwrap().abs())
        .fold(0.0, f64::max);
    let psi = PsiEvaluator::with_default_quadrature(&Prior::rademacher());
    let err = (1..=20)
        .map(|i| {
            let s = 0.1 * i as f64;
            (psi.value(&SymMatrix::scalar(s)).unwrap() - rademacher_psi_simpson(s)).abs()
        })
        .fold(0.0, f64::max);
    outcome(zero_max == 0.0 && err <= 1e-10, format!("max|psi(0)|={zero_max:.1e}, max closed-form error={err:.2e}"))
}

fn c2_shape_suite() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for prior in [Prior::rademacher(), Prior::product_rademacher(2).unwrap()] {
        let rep = psi_shape_suite(&PsiEvaluator::with_default_quadrature(&prior), 200, 11).unwrap();
        let violations = rep.rows.iter().filter(|r| r.statistic > 3.0 * r.stderr).count();
        pass &= rep.passed();
        parts.push(format!("K={}: {violations} violations in {} rows", prior.k(), rep.rows.len()));
    }
    outcome(pass, parts.join("; "))
}

fn c3_gradient() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut rng = derived_rng(3, &[]);
    for i in 0..50 {
        let prior = if i % 2 == 0 { Prior::new(vec![(vec![1.0], 0.3), (vec![-0.4], 0.7)]).unwrap() } else { Prior::product_rademacher(2).unwrap() };
        let k = prior.k();
        let psi = PsiEvaluator::with_default_quadrature(&prior);
        let s = &random_psd(k, rng.random_range(0.1..2.0), &mut rng) + &SymMatrix::identity(k).scale(0.05);
        let g = psi.gradient(&s).unwrap();
        let h = 1e-5;
        let mut fd = vec![0.0; k * k];
        for l in 0..k {
            for lp in l..k {
                let e = SymMatrix::unit(k, l, lp).scale(h);
                let d = (psi.value(&(&s + &e)).unwrap() - psi.value(&(&s - &e)).unwrap()) / (2.0 * h);
                let v = if l == lp { d } else { d / 2.0 };
                fd[l * k + lp] = v;
                fd[lp * k + l] = v;
            }
        }
        let fd = SymMatrix::from_row_major(k, &fd).unwrap();
        worst = worst.max((&fd - &g).frobenius_norm() / g.frobenius_norm().max(1e-12));
    }
    outcome(worst <= 1e-4, format!("max relative error {worst:.2e} over 50 points"))
}

fn oracle_grid(prior: &Prior, p: usize, lambda: f64, ns: &[usize]) -> Vec<OracleEstimate> {
    ns.iter().map(|&n| oracle_estimate(prior, n, p, lambda, 500, 2024, DEFAULT_BUDGET).unwrap()).collect()
}

fn gaps(limit: f64, o: &[OracleEstimate]) -> Vec<(f64, f64)> {
    o.iter().map(|e| (limit - e.mutual_info.mean, e.mutual_info.stderr)).collect()
}

fn nonincreasing(g: &[(f64, f64)], sigmas: f64) -> bool {
    g.windows(2).all(|w| w[1].0 - w[0].0 <= sigmas * w[0].1.hypot(w[1].1))
}

fn fmt_gaps(g: &[(f64, f64)]) -> String {
    g.iter().map(|(v, e)| format!("{v:.4}±{e:.4}")).collect::<Vec<_>>().join(", ")
}

fn c4_below_threshold() -> Outcome {
    let prior = Prior::rademacher();
    let sol = solve_replica(&prior, 2, 0.5, &SolverConfig::for_prior(&prior)).unwrap();
    let o = oracle_grid(&prior, 2, 0.5, &[4, 6, 8, 10]);
    let g = gaps(sol.mi_limit, &o);
    let pass = (sol.mi_limit - 0.125).abs() <= 1e-8 && g[3].0.abs() <= 0.05 && nonincreasing(&g, 2.0);
    outcome(pass, format!("mi_limit={:.10}, gaps n=4..10: {}", sol.mi_limit, fmt_gaps(&g)))
}

fn c5_above_threshold() -> Outcome {
    let prior = Prior::rademacher();
    let sol = solve_replica(&prior, 2, 2.0, &SolverConfig::for_prior(&prior)).unwrap();
    let o = oracle_grid(&prior, 2, 2.0, &[4, 6, 8, 10]);
    let g = gaps(sol.mi_limit, &o);
    let abs: Vec<(f64, f64)> = g.iter().map(|&(v, e)| (v.abs(), e)).collect();
    let pass = sol.s_star.get(0, 0) > 1e-3 && abs[3].0 <= 0.1 && nonincreasing(&abs, 2.0);
    outcome(pass, format!("s*={:.6}, mi_limit={:.6}, gaps n=4..10: {}", sol.s_star.get(0, 0), sol.mi_limit, fmt_gaps(&g)))
}

fn c6_rank_two() -> Outcome {
    let prior = Prior::product_rademacher(2).unwrap();
    let sol = solve_replica(&prior, 4, 0.5, &SolverConfig::for_prior(&prior)).unwrap();
    let o = oracle_grid(&prior, 4, 0.5, &[4, 6]);
    let g = gaps(sol.mi_limit, &o);
    let pass = sol.converged && sol.grad_norm <= 1e-6 && g[1].0.abs() <= 0.15 && g[1].0.abs() < g[0].0.abs();
    outcome(pass, format!("grad={:.1e}, mi_limit={:.6}, gaps n=4,6: {}", sol.grad_norm, sol.mi_limit, fmt_gaps(&g)))
}

fn c7_h_p() -> Outcome {
    let mut rng = derived_rng(7, &[]);
    let mut negatives = 0;
    for p in [2u32, 4, 6] {
        for _ in 0..100_000 {
            let (r, q) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            if h_p(r, q, p) < 0.0 {
                negatives += 1;
            }
        }
    }
    let h3 = h_p(-1.0, 0.0, 3);
    outcome(negatives == 0 && h3 == -2.0, format!("{negatives} negatives, h_3(-1,0)={h3}"))
}

fn c8_sum_rule() -> Outcome {
    let prior = Prior::rademacher();
    let interp = Interpolator::new(&prior, 6, 2, DEFAULT_BUDGET).unwrap();
    let est = Estimator { n_disorder: 500, seed: 88 };
    let path = solve_interpolation_ode(&interp, &SymMatrix::scalar(0.05), 20, &est).unwrap();
    let rep = sum_rule_check(&interp, &path, &PsiEvaluator::with_default_quadrature(&prior), &est).unwrap();
    outcome(
        rep.pass,
        format!("f_n={:.5}, rhs={:.5}, residual={:.2e}±{:.1e}, budget={:.4}", rep.value_lhs, rep.value_rhs, rep.residual, rep.stderr, rep.budget.total()),
    )
}

fn c9_derivative() -> Outcome {
    let prior = Prior::rademacher();
    let interp = Interpolator::new(&prior, 4, 2, DEFAULT_BUDGET).unwrap();
    let est = Estimator { n_disorder: 500, seed: 99 };
    let path = solve_interpolation_ode(&interp, &SymMatrix::scalar(0.05), 20, &est).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for t in [0.25, 0.5, 0.75] {
        let rep = free_entropy_t_derivative_check(&interp, &path, t, 0.02, &est).unwrap();
        pass &= rep.pass;
        parts.push(format!("t={t}: {:.2e}±{:.1e}", rep.residual, rep.stderr));
    }
    outcome(pass, parts.join(", "))
}

fn random_point<R: Rng>(k: usize, rng: &mut R) -> (f64, SymMatrix) {
    let t = rng.random_range(0.0..1.0);
    (t, &random_psd(k, rng.random_range(0.0..2.0), rng) + &SymMatrix::identity(k).scale(0.1))
}

fn c10_divergence() -> Outcome {
    let prior = Prior::product_rademacher(2).unwrap();
    let mut rng = derived_rng(10, &[]);
    let mut worst_delta = f64::INFINITY;
    let mut worst_div = f64::INFINITY;
    let mut jensen_ok = true;
    for p in [2, 4] {
        let interp = Interpolator::new(&prior, 4, p, DEFAULT_BUDGET).unwrap();
        for i in 0..10 {
            let (t, r) = random_point(2, &mut rng);
            let d = divergence_gn(&interp, t, &r, &Estimator { n_disorder: 300, seed: 1000 + i }).unwrap();
            for ij in 0..4 {
                let (l, lp) = (ij / 2, ij % 2);
                let se = d.delta_stderr.get(l, lp).max(1e-300);
                worst_delta = worst_delta.min(d.delta.get(l, lp) / se);
                jensen_ok &= d.jensen_lower.get(l, lp) <= d.jensen_upper.get(l, lp) + 3.0 * d.delta_stderr.get(l, lp);
            }
            worst_div = worst_div.min(d.value / d.stderr.max(1e-300));
        }
    }
    let rad = Prior::rademacher();
    let interp = Interpolator::new(&rad, 4, 2, DEFAULT_BUDGET).unwrap();
    let est = Estimator { n_disorder: 300, seed: 4 };
    let path = solve_interpolation_ode(&interp, &SymMatrix::scalar(0.05), 20, &est).unwrap();
    let (v, e) = path_divergence(&interp, &path, &est).unwrap();
    let liou = jacobian_det_liouville(&path, &v, &e).unwrap();
    let pass = worst_delta >= -3.0 && worst_div >= -3.0 && jensen_ok && liou.final_determinant >= 0.95;
    outcome(
        pass,
        format!(
            "min Δ/stderr={worst_delta:.2}, min div/stderr={worst_div:.2}, jensen={jensen_ok}, det={:.4e}",
            liou.final_determinant
        ),
    )
}

fn c11_l_identities() -> Outcome {
    let prior = Prior::product_rademacher(2).unwrap();
    let interp = Interpolator::new(&prior, 4, 2, DEFAULT_BUDGET).unwrap();
    let mut rng = derived_rng(11, &[]);
    let mut worst: f64 = 0.0;
    let mut worst_d: f64 = 0.0;
    for i in 0..10u64 {
        let (t, r) = random_point(2, &mut rng);
        for (l, lp) in [(0, 0), (0, 1), (1, 1)] {
            let rep = l_identities(&interp, t, &r, l, lp, &Estimator { n_disorder: 300, seed: 1100 + i }).unwrap();
            worst = worst.max(rep.identity_gap.mean.abs() / rep.identity_gap.stderr.max(1e-300));
            worst_d = worst_d.max(rep.derivative_gap.mean.abs() / rep.derivative_gap.stderr.max(1e-300));
        }
    }
    outcome(worst <= 3.0, format!("max |gap|/stderr: E<L> {worst:.2}, dL/dR {worst_d:.2}"))
}

fn c12_nishimori() -> Outcome {
    let mut rng = derived_rng(12, &[]);
    let mut pass = true;
    let mut parts = Vec::new();
    for prior in [Prior::rademacher(), Prior::product_rademacher(2).unwrap()] {
        let interp = Interpolator::new(&prior, 4, 2, DEFAULT_BUDGET).unwrap();
        let (t, r) = random_point(prior.k(), &mut rng);
        let rep = nishimori_suite(&interp, t, &r, &Estimator { n_disorder: 500, seed: 12 }).unwrap();
        let worst = rep.rows.iter().map(|r| r.statistic.abs() / r.stderr.max(1e-300)).fold(0.0, f64::max);
        pass &= rep.passed();
        parts.push(format!("K={}: {} monomials, max |diff|/stderr={worst:.2}", prior.k(), rep.rows.len()));
    }
    outcome(pass, parts.join("; "))
}

fn c13_concentration() -> Outcome {
    let ns = [4, 6, 8, 10];
    let prior = Prior::rademacher();
    let var = free_entropy_variance_scan(&prior, 2, 1.0, &ns, &Estimator { n_disorder: 1000, seed: 13 }, DEFAULT_BUDGET).unwrap();
    let fl = overlap_fluctuation_scan(&prior, 2, &ns, 50, 10, 13, DEFAULT_BUDGET).unwrap();
    let row = |r: &trl::diagnostics::ScanRow| format!("{:.4}", r.statistic);
    outcome(
        var.passed() && fl.passed(),
        format!(
            "n*Var: [{}] {:?}; fluctuation: [{}] {:?}",
            var.rows.iter().map(row).collect::<Vec<_>>().join(", "),
            var.verdict,
            fl.rows.iter().map(row).collect::<Vec<_>>().join(", "),
            fl.verdict
        ),
    )
}

fn run_cli(args: &[&str], threads: &str, out: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let status = Command::new(env!("CARGO_BIN_EXE_trl"))
        .args(args)
        .args(["--threads", threads, "--out"])
        .arg(out)
        .env_remove("TRL_SEED")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .expect("binary runs");
    assert!(status.code().is_some());
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(out)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn c14_determinism() -> Outcome {
    let commands: [&[&str]; 4] = [
        &["replica", "--prior", "rademacher", "--p", "2", "--lambda", "2"],
        &["oracle", "--prior", "rademacher", "--p", "2", "--lambda", "0.5", "--n-grid", "4,6", "--disorder", "50"],
        &["interpolate", "--prior", "rademacher", "--p", "2", "--n", "4", "--disorder", "40", "--steps", "10"],
        &["check", "--prior", "rademacher", "--p", "2", "--n", "3", "--disorder", "40", "--steps", "4", "--n-grid", "2,3"],
    ];
    let mut identical = true;
    let mut files = 0;
    for cmd in commands {
        let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
        let a = run_cli(cmd, "1", dirs[0].path());
        let b = run_cli(cmd, "8", dirs[1].path());
        let c = run_cli(cmd, "8", dirs[2].path());
        identical &= !a.is_empty() && a == b && b == c;
        files += a.len();
    }
    outcome(identical, format!("{files} output files identical across repeats and --threads 1 vs 8"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 14] = [
        ("psi exactness", c1_psi_exactness),
        ("psi shape suite", c2_shape_suite),
        ("psi gradient", c3_gradient),
        ("replica vs oracle below threshold", c4_below_threshold),
        ("replica vs oracle above threshold", c5_above_threshold),
        ("rank-2 p=4 smoke", c6_rank_two),
        ("h_p nonnegativity", c7_h_p),
        ("sum rule", c8_sum_rule),
        ("t-derivative formula", c9_derivative),
        ("divergence and Jacobian", c10_divergence),
        ("L identities", c11_l_identities),
        ("Nishimori suite", c12_nishimori),
        ("concentration scans", c13_concentration),
        ("determinism", c14_determinism),
    ];
    let only: Option<usize> = std::env::var("TRL_ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {:>2} {name} ({:.1}s): {}", i + 1, start.elapsed().as_secs_f64(), o.detail);
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

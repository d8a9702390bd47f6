//! Command-line front end. Every written file carries the SHA-256 of the
//! resolved configuration and the master seed.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::diagnostics::{free_entropy_variance_scan, nishimori_suite, overlap_fluctuation_scan, psi_shape_suite, ScanReport};
use crate::error::Error;
use crate::fmt_f64;
use crate::interpolation::{
    divergence_gn, endpoint_checks, free_entropy_t_derivative_check, jacobian_det_liouville, l_identities, solve_interpolation_ode,
    sum_rule_check, CheckReport, Estimator, InterpolationPath, Interpolator,
};
use crate::model::{oracle_estimate, sample_instance, DEFAULT_BUDGET};
use crate::prior::Prior;
use crate::quadrature::QuadratureSpec;
use crate::replica::{lambda_sweep, solve_replica, PsiEvaluator, ReplicaSolution, SolverConfig};
use crate::rng::derived_rng;
use crate::symmat::{PerturbationBox, SymMatrix};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NONCONVERGENCE: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_NOISE: i32 = 4;
pub const EXIT_REGIME: i32 = 5;
pub const EXIT_CHECK_FAILED: i32 = 6;

const EXPLORATORY: &str = "exploratory — unproven regime";

#[derive(Parser, Debug)]
#[command(name = "trl", version, about = "Replica formula and interpolation checks for symmetric tensor factorization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the replica variational problem at one λ.
    Replica(Common),
    /// Replica solutions over a λ grid.
    Sweep(Common),
    /// Draw one tensor instance.
    Simulate(Common),
    /// Exact small-n free entropy and mutual information.
    Oracle(Common),
    /// Integrate the interpolation ODE and check the sum rule.
    Interpolate(Common),
    /// Run every property check and scan.
    Check(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Prior name (rademacher, sparse(ρ), product_rademacher(K), deterministic(a,..)) or @file.json.
    #[arg(long)]
    pub prior: Option<String>,
    /// Rank; with no --prior selects product_rademacher(K).
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// `a:b:step`, inclusive.
    #[arg(long)]
    pub lambda_grid: Option<String>,
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    /// Comma list or `a:b:step`.
    #[arg(long)]
    pub n_grid: Option<String>,
    /// Master seed; the TRL_SEED environment variable takes precedence.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub disorder: usize,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
    /// Gauss–Hermite nodes per dimension.
    #[arg(long)]
    pub quad_nodes: Option<usize>,
    /// Monte Carlo quadrature samples.
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    /// Initial condition ε = e·I; sampled from the perturbation box when absent.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Refuse odd tensor orders.
    #[arg(long)]
    pub strict: bool,
}

/// Resolved, serializable run configuration.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub prior: String,
    pub k: usize,
    pub p: usize,
    pub lambda: f64,
    pub lambda_grid: Vec<f64>,
    pub n: usize,
    pub n_grid: Vec<usize>,
    pub disorder: usize,
    pub budget: u64,
    pub quadrature: QuadratureSpec,
    pub steps: usize,
    pub epsilon: Option<f64>,
    pub strict: bool,
}

impl RunConfig {
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("plain data");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::BudgetExceeded { .. } => EXIT_BUDGET,
            Error::EstimatorTooNoisy(_) => EXIT_NOISE,
            _ => EXIT_CONFIG,
        };
        let message = match &e {
            Error::EstimatorTooNoisy(_) => format!("{e}; rerun with a larger --disorder"),
            _ => e.to_string(),
        };
        Self { code, message }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_CONFIG, message: message.into() }
}

pub fn parse_float_grid(s: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| config_error(format!("bad number '{v}' in grid '{s}'")));
    if parts.len() != 3 {
        return Err(config_error(format!("grid '{s}' must look like a:b:step")));
    }
    let (a, b, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
    if !(step > 0.0) || b < a || !a.is_finite() || !b.is_finite() {
        return Err(config_error(format!("grid '{s}' needs a ≤ b and step > 0")));
    }
    let count = ((b - a) / step + 1e-9).floor() as usize;
    if count > 100_000 {
        return Err(config_error(format!("grid '{s}' has too many points")));
    }
    Ok((0..=count).map(|i| a + i as f64 * step).collect())
}

pub fn parse_size_grid(s: &str) -> Result<Vec<usize>, Failure> {
    let num = |v: &str| v.trim().parse::<usize>().map_err(|_| config_error(format!("bad size '{v}' in grid '{s}'")));
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(config_error(format!("grid '{s}' must look like a:b:step")));
        }
        let (a, b, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if step == 0 || b < a {
            return Err(config_error(format!("grid '{s}' needs a ≤ b and step > 0")));
        }
        return Ok((a..=b).step_by(step).collect());
    }
    s.split(',').map(num).collect()
}

fn resolve_prior(c: &Common) -> Result<Prior, Failure> {
    let prior = match (&c.prior, c.k) {
        (Some(name), _) => Prior::from_name(name)?,
        (None, Some(1)) | (None, None) => Prior::rademacher(),
        (None, Some(k)) => Prior::product_rademacher(k)?,
    };
    if let Some(k) = c.k {
        if k != prior.k() {
            return Err(config_error(format!("--K {k} disagrees with the prior's rank {}", prior.k())));
        }
    }
    Ok(prior)
}

fn resolve(command: &str, c: &Common) -> Result<(RunConfig, Prior), Failure> {
    let prior = resolve_prior(c)?;
    if c.p < 2 {
        return Err(config_error(format!("--p must be at least 2, got {}", c.p)));
    }
    if c.strict && c.p % 2 == 1 {
        return Err(Failure { code: EXIT_REGIME, message: format!("--strict refuses odd p={} ({EXPLORATORY})", c.p) });
    }
    if !(c.lambda >= 0.0) || !c.lambda.is_finite() {
        return Err(config_error(format!("--lambda must be nonnegative, got {}", c.lambda)));
    }
    let quadrature = match (c.quad_nodes, c.mc_samples) {
        (Some(_), Some(_)) => return Err(config_error("--quad-nodes and --mc-samples are exclusive")),
        (Some(nodes), None) => QuadratureSpec::GaussHermite { nodes_per_dim: nodes },
        (None, Some(samples)) => QuadratureSpec::MonteCarlo { samples, seed: c.seed },
        (None, None) => QuadratureSpec::default_for(prior.k()),
    };
    quadrature.validate(prior.k())?;
    let lambda_grid = match &c.lambda_grid {
        Some(g) => parse_float_grid(g)?,
        None => vec![c.lambda],
    };
    let n_grid = match &c.n_grid {
        Some(g) => parse_size_grid(g)?,
        None if command == "check" => vec![4, 6, 8, 10],
        None => vec![c.n],
    };
    if n_grid.is_empty() || n_grid.contains(&0) || c.n == 0 {
        return Err(config_error("sizes must be positive"));
    }
    if c.disorder < 2 {
        return Err(config_error("--disorder must be at least 2"));
    }
    if c.steps == 0 {
        return Err(config_error("--steps must be positive"));
    }
    if let Some(e) = c.epsilon {
        if !(e >= 0.0) || !e.is_finite() {
            return Err(config_error(format!("--epsilon must be nonnegative, got {e}")));
        }
    }
    let config = RunConfig {
        command: command.into(),
        prior: prior.to_json(),
        k: prior.k(),
        p: c.p,
        lambda: c.lambda,
        lambda_grid,
        n: c.n,
        n_grid,
        disorder: c.disorder,
        budget: c.budget,
        quadrature,
        steps: c.steps,
        epsilon: c.epsilon,
        strict: c.strict,
    };
    Ok((config, prior))
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    config_hash: &'a str,
    seed: u64,
    regime: &'a str,
    config: &'a RunConfig,
    result: T,
}

struct Output {
    dir: PathBuf,
    hash: String,
    seed: u64,
    config: RunConfig,
}

impl Output {
    fn new(dir: &Path, config: RunConfig, seed: u64) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
        Ok(Self { dir: dir.to_path_buf(), hash: config.hash(), seed, config })
    }

    fn regime(&self) -> &'static str {
        if self.config.p % 2 == 1 {
            EXPLORATORY
        } else {
            "even p"
        }
    }

    fn json<T: Serialize>(&self, name: &str, result: T) -> Result<(), Failure> {
        let env = Envelope { config_hash: &self.hash, seed: self.seed, regime: self.regime(), config: &self.config, result };
        let mut text = serde_json::to_string_pretty(&env).map_err(Error::from)?;
        text.push('\n');
        std::fs::write(self.dir.join(name), text).map_err(Error::from)?;
        Ok(())
    }

    fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), Failure> {
        let mut text = format!("# config_hash={} seed={} regime={}\n", self.hash, self.seed, self.regime());
        text.push_str(&header.join(","));
        text.push('\n');
        for r in rows {
            text.push_str(&r.join(","));
            text.push('\n');
        }
        std::fs::write(self.dir.join(name), text).map_err(Error::from)?;
        Ok(())
    }
}

fn solver_config(config: &RunConfig, prior: &Prior, seed: u64) -> SolverConfig {
    SolverConfig { quadrature: config.quadrature, seed, ..SolverConfig::for_prior(prior) }
}

fn replica_row(s: &ReplicaSolution) -> Vec<String> {
    let mut row = vec![fmt_f64(s.lambda), fmt_f64(s.mi_limit), fmt_f64(s.phi_value), fmt_f64(s.grad_norm), s.converged.to_string()];
    row.extend(s.s_star.row_major().into_iter().map(fmt_f64));
    row
}

fn replica_header(k: usize) -> Vec<String> {
    let mut h: Vec<String> = ["lambda", "mi_limit", "phi", "grad_norm", "converged"].iter().map(|s| s.to_string()).collect();
    for l in 0..k {
        for lp in 0..k {
            h.push(format!("S_{l}{lp}"));
        }
    }
    h
}

fn positive_lambda(lambda: f64) -> Result<f64, Failure> {
    if lambda > 0.0 {
        Ok(lambda)
    } else {
        Err(config_error("the replica problem needs λ > 0"))
    }
}

fn cmd_replica(out: &Output, prior: &Prior) -> Result<i32, Failure> {
    let c = &out.config;
    let sol = solve_replica(prior, c.p, positive_lambda(c.lambda)?, &solver_config(c, prior, out.seed))?;
    out.json("replica.json", &sol)?;
    let header = replica_header(prior.k());
    out.csv("replica.csv", &header.iter().map(String::as_str).collect::<Vec<_>>(), &[replica_row(&sol)])?;
    println!("mi_limit {} at lambda {} ({})", fmt_f64(sol.mi_limit), sol.lambda, out.regime());
    if !sol.converged {
        eprintln!("optimizer did not converge; best iterate written (projected gradient {:.3e})", sol.grad_norm);
        return Ok(EXIT_NONCONVERGENCE);
    }
    Ok(EXIT_PASS)
}

fn cmd_sweep(out: &Output, prior: &Prior) -> Result<i32, Failure> {
    let c = &out.config;
    for &l in &c.lambda_grid {
        positive_lambda(l)?;
    }
    let sols = lambda_sweep(prior, c.p, &c.lambda_grid, &solver_config(c, prior, out.seed))?;
    out.json("sweep.json", &sols)?;
    let header = replica_header(prior.k());
    out.csv("sweep.csv", &header.iter().map(String::as_str).collect::<Vec<_>>(), &sols.iter().map(replica_row).collect::<Vec<_>>())?;
    println!("{} sweep points ({})", sols.len(), out.regime());
    Ok(if sols.iter().all(|s| s.converged) { EXIT_PASS } else { EXIT_NONCONVERGENCE })
}

fn cmd_simulate(out: &Output, prior: &Prior) -> Result<i32, Failure> {
    let c = &out.config;
    let mut rng = derived_rng(out.seed, &[0x51]);
    let needed = crate::model::index_count(c.n, c.p);
    if needed > c.budget as u128 {
        return Err(Error::BudgetExceeded { needed, budget: c.budget }.into());
    }
    let inst = sample_instance(prior, c.n, c.p, c.lambda, &mut rng)?;
    let value: serde_json::Value = serde_json::from_str(&inst.to_json()).map_err(Error::from)?;
    out.json("instance.json", value)?;
    println!("instance with {} observations written", inst.y.len());
    Ok(EXIT_PASS)
}

#[derive(Serialize)]
struct OracleRow {
    n: usize,
    lambda: f64,
    free_entropy: f64,
    free_entropy_stderr: f64,
    mutual_info: f64,
    mutual_info_stderr: f64,
    n_var_free_entropy: f64,
    mi_limit: f64,
    gap: f64,
}

fn cmd_oracle(out: &Output, prior: &Prior) -> Result<i32, Failure> {
    let c = &out.config;
    let solver = solver_config(c, prior, out.seed);
    let mut rows = Vec::new();
    for &lambda in &c.lambda_grid {
        let limit = if lambda > 0.0 { solve_replica(prior, c.p, lambda, &solver)?.mi_limit } else { 0.0 };
        for &n in &c.n_grid {
            let o = oracle_estimate(prior, n, c.p, lambda, c.disorder, out.seed, c.budget)?;
            rows.push(OracleRow {
                n,
                lambda,
                free_entropy: o.free_entropy.mean,
                free_entropy_stderr: o.free_entropy.stderr,
                mutual_info: o.mutual_info.mean,
                mutual_info_stderr: o.mutual_info.stderr,
                n_var_free_entropy: n as f64 * o.free_entropy_variance,
                mi_limit: limit,
                gap: limit - o.mutual_info.mean,
            });
        }
    }
    out.json("oracle.json", &rows)?;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.n.to_string()];
            v.extend(
                [r.lambda, r.free_entropy, r.free_entropy_stderr, r.mutual_info, r.mutual_info_stderr, r.n_var_free_entropy, r.mi_limit, r.gap]
                    .into_iter()
                    .map(fmt_f64),
            );
            v
        })
        .collect();
    out.csv(
        "oracle.csv",
        &["n", "lambda", "free_entropy", "free_entropy_stderr", "mutual_info", "mutual_info_stderr", "n_var_free_entropy", "mi_limit", "gap"],
        &csv_rows,
    )?;
    for r in &rows {
        println!("n={} lambda={} mi={:.6} ± {:.6} limit={:.6}", r.n, r.lambda, r.mutual_info, r.mutual_info_stderr, r.mi_limit);
    }
    Ok(EXIT_PASS)
}

/// Prior at unit SNR plus the ODE path shared by `interpolate` and `check`.
struct PathSetup {
    prior: Prior,
    interp: Interpolator,
    est: Estimator,
    path: InterpolationPath,
    psi: PsiEvaluator,
}

fn path_setup(out: &Output, prior: &Prior) -> Result<PathSetup, Failure> {
    let c = &out.config;
    let prior = if c.lambda > 0.0 { prior.rescale_to_unit_snr(c.p, c.lambda)? } else { Prior::deterministic(vec![0.0; prior.k()])? };
    let interp = Interpolator::new(&prior, c.n, c.p, c.budget)?;
    let est = Estimator { n_disorder: c.disorder, seed: out.seed };
    let epsilon = match c.epsilon {
        Some(e) => SymMatrix::identity(prior.k()).scale(e),
        None => PerturbationBox::for_size(c.n, prior.k())?.sample(&mut derived_rng(out.seed, &[0xe9])),
    };
    let path = solve_interpolation_ode(&interp, &epsilon, c.steps, &est)?;
    let psi = PsiEvaluator::new(&prior, c.quadrature)?;
    Ok(PathSetup { prior, interp, est, path, psi })
}

fn write_path(out: &Output, s: &PathSetup) -> Result<(), Failure> {
    let csv = s.path.to_csv();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    out.csv("path.csv", &header, &rows)?;
    out.json("path.json", &s.path)
}

fn cmd_interpolate(out: &Output, prior: &Prior) -> Result<i32, Failure> {
    let s = path_setup(out, prior)?;
    write_path(out, &s)?;
    let rep = sum_rule_check(&s.interp, &s.path, &s.psi, &s.est)?;
    out.json("sum_rule.json", &rep)?;
    println!("sum rule residual {:.3e} (budget {:.3e}) {}", rep.residual, rep.budget.total(), if rep.pass { "pass" } else { "fail" });
    Ok(if rep.pass { EXIT_PASS } else { EXIT_CHECK_FAILED })
}

#[derive(Serialize)]
struct Verdict {
    name: String,
    pass: bool,
}

fn cmd_check(out: &Output, prior: &Prior) -> Result<i32, Failure> {
    let c = out.config.clone();
    let s = path_setup(out, prior)?;
    write_path(out, &s)?;
    let mut verdicts = Vec::new();
    let mut record = |name: &str, pass: bool| verdicts.push(Verdict { name: name.into(), pass });

    let sum = sum_rule_check(&s.interp, &s.path, &s.psi, &s.est)?;
    record("sum_rule", sum.pass);
    out.json("sum_rule.json", &sum)?;

    let endpoints = endpoint_checks(&s.interp, &s.path, &s.psi, &s.est)?;
    for e in &endpoints {
        record(&e.name, e.pass);
    }
    out.json("endpoints.json", &endpoints)?;

    let derivative: Vec<CheckReport> = [0.25, 0.5, 0.75]
        .into_iter()
        .map(|t| free_entropy_t_derivative_check(&s.interp, &s.path, t, 0.02, &s.est))
        .collect::<crate::Result<_>>()?;
    record("t_derivative", derivative.iter().all(|r| r.pass));
    out.json("t_derivative.json", &derivative)?;

    let divergence: Vec<_> = s.path.points.iter().map(|pt| divergence_gn(&s.interp, pt.t, &pt.r, &s.est)).collect::<crate::Result<_>>()?;
    let k = s.prior.k();
    let delta_ok = divergence.iter().all(|d| {
        d.value >= -3.0 * d.stderr - 1e-12
            && (0..k).all(|l| (0..k).all(|lp| d.delta.get(l, lp) >= -3.0 * d.delta_stderr.get(l, lp) - 1e-12))
            && (0..k).all(|l| (0..k).all(|lp| d.jensen_lower.get(l, lp) <= d.jensen_upper.get(l, lp) + 3.0 * d.delta_stderr.get(l, lp) + 1e-12))
    });
    record("divergence", delta_ok);
    let values: Vec<f64> = divergence.iter().map(|d| d.value).collect();
    let errors: Vec<f64> = divergence.iter().map(|d| d.stderr).collect();
    let liouville = jacobian_det_liouville(&s.path, &values, &errors)?;
    record("liouville", liouville.final_determinant >= 0.95 && liouville.nondecreasing);
    out.json("divergence.json", &divergence)?;
    out.json("liouville.json", &liouville)?;

    let mid = &s.path.points[s.path.points.len() / 2];
    let mut l_reports = Vec::new();
    if mid.r.min_eigenvalue() > 1e-8 {
        for l in 0..k {
            for lp in l..k {
                l_reports.push(l_identities(&s.interp, mid.t, &mid.r, l, lp, &s.est)?);
            }
        }
    }
    record("l_identities", l_reports.iter().all(|r| r.pass));
    out.json("l_identities.json", &l_reports)?;

    let mut scans: Vec<ScanReport> = vec![nishimori_suite(&s.interp, mid.t, &mid.r, &s.est)?];
    scans.push(free_entropy_variance_scan(&s.prior, c.p, 1.0, &c.n_grid, &s.est, c.budget)?);
    scans.push(overlap_fluctuation_scan(&s.prior, c.p, &c.n_grid, (c.disorder / 10).max(2), 10, out.seed, c.budget)?);
    scans.push(psi_shape_suite(&s.psi, 50, out.seed)?);
    for scan in &scans {
        record(&scan.scan_id, scan.passed());
        out.json(&format!("scan_{}.json", scan.scan_id), scan)?;
        let rows: Vec<Vec<String>> =
            scan.rows.iter().map(|r| vec![format!("\"{}\"", r.parameters), fmt_f64(r.statistic), fmt_f64(r.stderr)]).collect();
        out.csv(&format!("scan_{}.csv", scan.scan_id), &["parameters", "statistic", "stderr"], &rows)?;
    }

    let all = verdicts.iter().all(|v| v.pass);
    for v in &verdicts {
        println!("{} {}", if v.pass { "PASS" } else { "FAIL" }, v.name);
    }
    out.json("summary.json", &verdicts)?;
    Ok(if all { EXIT_PASS } else { EXIT_CHECK_FAILED })
}

fn dispatch(command: &str, common: &Common) -> Result<i32, Failure> {
    let (config, prior) = resolve(command, common)?;
    let seed = match std::env::var("TRL_SEED") {
        Ok(v) => v.trim().parse::<u64>().map_err(|_| config_error(format!("TRL_SEED must be an unsigned integer, got '{v}'")))?,
        Err(_) => common.seed,
    };
    let out = Output::new(&common.out, config, seed)?;
    if out.config.p % 2 == 1 {
        eprintln!("p={} is odd: {EXPLORATORY}", out.config.p);
    }
    match command {
        "replica" => cmd_replica(&out, &prior),
        "sweep" => cmd_sweep(&out, &prior),
        "simulate" => cmd_simulate(&out, &prior),
        "oracle" => cmd_oracle(&out, &prior),
        "interpolate" => cmd_interpolate(&out, &prior),
        _ => cmd_check(&out, &prior),
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let (name, common) = match &cli.command {
        Command::Replica(c) => ("replica", c),
        Command::Sweep(c) => ("sweep", c),
        Command::Simulate(c) => ("simulate", c),
        Command::Oracle(c) => ("oracle", c),
        Command::Interpolate(c) => ("interpolate", c),
        Command::Check(c) => ("check", c),
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = common.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return EXIT_CONFIG;
        }
        builder = builder.num_threads(t);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match pool.install(|| dispatch(name, common)) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

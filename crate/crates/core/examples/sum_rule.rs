//! Sum rule along the ODE path, the linear-path variant and the t-derivative formula.
use trl::interpolation::{free_entropy_t_derivative_check, linear_path_sum_rule, solve_interpolation_ode, sum_rule_check, Estimator, Interpolator};
use trl::model::DEFAULT_BUDGET;
use trl::{Prior, PsiEvaluator, SymMatrix};

fn main() -> trl::Result<()> {
    let prior = Prior::rademacher();
    let psi = PsiEvaluator::with_default_quadrature(&prior);
    let interp = Interpolator::new(&prior, 6, 2, DEFAULT_BUDGET)?;
    let est = Estimator { n_disorder: 500, seed: 3 };
    let path = solve_interpolation_ode(&interp, &SymMatrix::scalar(0.05), 20, &est)?;
    let rep = sum_rule_check(&interp, &path, &psi, &est)?;
    println!("{}", serde_json::to_string_pretty(&rep)?);

    let lin = linear_path_sum_rule(&interp, &SymMatrix::scalar(0.8), &psi, 20, &est)?;
    println!("linear path: f_n={:.5} phi={:.5} h-integral={:.5} decomposition gap={:.1e}", lin.f_n.mean, lin.phi, lin.h_integral, lin.decomposition_gap);

    for t in [0.25, 0.5, 0.75] {
        let d = free_entropy_t_derivative_check(&interp, &path, t, 0.02, &est)?;
        println!("t={t}: finite difference {:.5}, formula {:.5}", d.value_lhs, d.value_rhs);
    }
    Ok(())
}

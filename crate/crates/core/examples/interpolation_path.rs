//! Integrates the overlap-driven interpolation ODE and prints the path as CSV.
use trl::interpolation::{solve_interpolation_ode, Estimator, Interpolator};
use trl::model::DEFAULT_BUDGET;
use trl::{Prior, SymMatrix};

fn main() -> trl::Result<()> {
    let prior = Prior::product_rademacher(2)?;
    let interp = Interpolator::new(&prior, 4, 2, DEFAULT_BUDGET)?;
    let est = Estimator { n_disorder: 300, seed: 7 };
    let path = solve_interpolation_ode(&interp, &SymMatrix::identity(2).scale(0.05), 20, &est)?;
    print!("{}", path.to_csv());
    eprintln!("largest PSD projection distance {:.2e}", path.max_projection());
    Ok(())
}

//! Free-entropy variance and overlap fluctuation scans over n, with the
//! divergence of the ODE field and its Liouville determinant.
use trl::diagnostics::{free_entropy_variance_scan, overlap_fluctuation_scan};
use trl::interpolation::{jacobian_det_liouville, path_divergence, solve_interpolation_ode, Estimator, Interpolator};
use trl::model::DEFAULT_BUDGET;
use trl::{Prior, SymMatrix};

fn main() -> trl::Result<()> {
    let prior = Prior::rademacher();
    let ns = [4, 6, 8, 10];
    let var = free_entropy_variance_scan(&prior, 2, 1.0, &ns, &Estimator { n_disorder: 1000, seed: 1 }, DEFAULT_BUDGET)?;
    let fl = overlap_fluctuation_scan(&prior, 2, &ns, 50, 10, 1, DEFAULT_BUDGET)?;
    for scan in [&var, &fl] {
        println!("{} ({}): {:?}", scan.scan_id, scan.criterion, scan.verdict);
        for r in &scan.rows {
            println!("  {:<16} {:.5} ± {:.5}", r.parameters, r.statistic, r.stderr);
        }
    }
    let interp = Interpolator::new(&prior, 4, 2, DEFAULT_BUDGET)?;
    let est = Estimator { n_disorder: 300, seed: 1 };
    let path = solve_interpolation_ode(&interp, &SymMatrix::scalar(0.05), 20, &est)?;
    let (d, e) = path_divergence(&interp, &path, &est)?;
    let liou = jacobian_det_liouville(&path, &d, &e)?;
    println!("Jacobian determinant along the path: {:.4}", liou.final_determinant);
    Ok(())
}

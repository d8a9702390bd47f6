//! Solves the replica variational problem for a few priors and orders.
use trl::{solve_replica, Prior, SolverConfig};

fn main() -> trl::Result<()> {
    let cases = [
        ("rademacher", Prior::rademacher(), 2, 2.0),
        ("sparse(0.2)", Prior::sparse(0.2)?, 2, 3.0),
        ("product_rademacher(2)", Prior::product_rademacher(2)?, 4, 0.5),
        ("rademacher", Prior::rademacher(), 4, 6.0),
    ];
    for (name, prior, p, lambda) in cases {
        let sol = solve_replica(&prior, p, lambda, &SolverConfig::for_prior(&prior))?;
        println!(
            "{name:<24} p={p} lambda={lambda:<4} mi_limit={:.6} S*={:?} local maxima={}",
            sol.mi_limit,
            sol.s_star,
            sol.local_maxima.len()
        );
    }
    Ok(())
}

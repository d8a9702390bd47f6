//! Replica mutual information across the Rademacher spiked-matrix transition at λ = 1.
use trl::{lambda_sweep, Prior, SolverConfig};

fn main() -> trl::Result<()> {
    let prior = Prior::rademacher();
    let grid: Vec<f64> = (1..=20).map(|i| 0.2 * i as f64).collect();
    println!("lambda,mi_limit,s_star");
    for s in lambda_sweep(&prior, 2, &grid, &SolverConfig::for_prior(&prior))? {
        println!("{:.2},{:.8},{:.8}", s.lambda, s.mi_limit, s.s_star.get(0, 0));
    }
    Ok(())
}

//! Exact-enumeration mutual information at small n against the replica limit.
use trl::model::{oracle_estimate, DEFAULT_BUDGET};
use trl::{solve_replica, Prior, SolverConfig};

fn main() -> trl::Result<()> {
    let prior = Prior::rademacher();
    for lambda in [0.5, 2.0] {
        let limit = solve_replica(&prior, 2, lambda, &SolverConfig::for_prior(&prior))?.mi_limit;
        println!("lambda={lambda} replica limit {limit:.5}");
        for n in [4, 6, 8, 10] {
            let o = oracle_estimate(&prior, n, 2, lambda, 500, 1, DEFAULT_BUDGET)?;
            println!("  n={n:<2} mi={:.5} ± {:.5}  gap={:+.5}", o.mutual_info.mean, o.mutual_info.stderr, limit - o.mutual_info.mean);
        }
    }
    Ok(())
}

//! Convexity and Lipschitz checks of ψ on random PSD pairs.
use trl::diagnostics::psi_shape_suite;
use trl::{Prior, PsiEvaluator};

fn main() -> trl::Result<()> {
    for prior in [Prior::rademacher(), Prior::sparse(0.1)?, Prior::product_rademacher(2)?] {
        let rep = psi_shape_suite(&PsiEvaluator::with_default_quadrature(&prior), 200, 42)?;
        let worst = rep.rows.iter().map(|r| r.statistic).fold(f64::NEG_INFINITY, f64::max);
        println!("K={} rows={} worst slack {worst:+.3e} verdict {:?}", prior.k(), rep.rows.len(), rep.verdict);
    }
    Ok(())
}

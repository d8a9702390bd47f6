//! Nishimori identity for overlap monomials, plus the 𝓛-matrix identities.
use trl::diagnostics::nishimori_suite;
use trl::interpolation::{l_identities, Estimator, Interpolator};
use trl::model::DEFAULT_BUDGET;
use trl::{Prior, SymMatrix};

fn main() -> trl::Result<()> {
    let prior = Prior::product_rademacher(2)?;
    let interp = Interpolator::new(&prior, 4, 2, DEFAULT_BUDGET)?;
    let r = SymMatrix::from_rows(&[vec![0.9, 0.2], vec![0.2, 0.5]])?;
    let est = Estimator { n_disorder: 300, seed: 5 };
    let rep = nishimori_suite(&interp, 0.4, &r, &est)?;
    for row in &rep.rows {
        println!("{:<28} {:+.2e} ± {:.1e}", row.parameters, row.statistic, row.stderr);
    }
    println!("verdict {:?}", rep.verdict);
    for (l, lp) in [(0, 0), (0, 1), (1, 1)] {
        let li = l_identities(&interp, 0.4, &r, l, lp, &est)?;
        println!("L_{l}{lp}: E<L>={:+.4}, E<Q>={:+.4}, gap {:+.1e} ± {:.1e}", li.mean_l.mean, li.mean_q.mean, li.identity_gap.mean, li.identity_gap.stderr);
    }
    Ok(())
}

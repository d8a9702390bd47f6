//! Shrink rate of the perturbation box and the matrix-square-root derivatives on it.
use trl::rng::rng_from_seed;
use trl::symmat::{default_sn, PerturbationBox};

fn main() -> trl::Result<()> {
    for k in [1, 2, 3] {
        let sn: Vec<String> = [10, 100, 1000, 10_000].iter().map(|&n| format!("{:.4}", default_sn(n, k))).collect();
        println!("K={k} s_n at n=10,100,1e3,1e4: {}", sn.join(" "));
    }
    let b = PerturbationBox::for_size(100, 2)?;
    let eps = b.sample(&mut rng_from_seed(1));
    let d = eps.dsqrt(0, 1)?;
    let d2 = eps.d2sqrt(0, 1)?;
    println!("ε = {eps:?}\n∂√ε/∂ε_01 = {d:?}\n∂²√ε/∂ε_01² = {d2:?}");
    Ok(())
}

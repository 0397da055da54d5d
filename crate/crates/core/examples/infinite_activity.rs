// The t → ∞ limit: iterating z ↦ Γ̄(Γ(z)) from 0 and from ∞ brackets the
// messages, and ½ Σ U at the lower envelope estimates the maximum size.

use cavity_core::cavity::{self, DEFAULT_TOL};
use cavity_core::ensembles;
use cavity_core::exact::Oracle;
use cavity_core::network::fixtures;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for (name, net) in [("star K_{1,3}, b=1", fixtures::star(3, 1)), ("path P_7, b=1", fixtures::path(7, 1)), ("path P_7, b=2", fixtures::path(7, 2))] {
        let sol = cavity::solve_infinite_activity(&net, 1000, DEFAULT_TOL)?;
        let rank = cavity::rank_estimate(&net, &sol)?;
        let exact = Oracle::new(&net)?.max_size();
        println!("{name}: rank estimate {rank} (exact {exact}) after {} iterations", sol.iterations);
        assert!((rank - exact as f64).abs() < 1e-9);
    }

    let g = ensembles::erdos_renyi(500, 2.0, 11)?;
    let net = g.bmatching(1)?;
    let sol = cavity::solve_infinite_activity(&net, 5000, DEFAULT_TOL)?;
    let (lo, hi) = cavity::rank_bracket(&net, &sol)?;
    println!("ER(500, 2), b=1: matching size in [{lo:.3}, {hi:.3}], {:.4} per vertex", lo / 500.0);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}

// Off trees the cavity fixed point is an approximation. On a triangle with
// b = 1 at t = 1 the exact energy is 3/4 while the fixed point
// x = 1/(1 + x) gives 3x²/(1 + x²) ≈ 0.829.

use cavity_core::cavity::{self, DEFAULT_TOL};
use cavity_core::exact::Oracle;
use cavity_core::network::fixtures;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let net = fixtures::triangle(1);
    let sol = cavity::solve_cavity(&net, 1.0, 1000, DEFAULT_TOL)?;
    let bp = cavity::energy_at(&net, &sol)?;
    let exact = Oracle::new(&net)?.energy(1.0);
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    println!("message {:.12} (golden ratio conjugate {golden:.12})", sol.estimate()[0].to_f64());
    println!("energy: cavity {:.6}, exact {exact:.6}, difference {:.4}", bp.energy, bp.energy - exact);
    let x2 = golden * golden;
    assert!((bp.energy - 3.0 * x2 / (1.0 + x2)).abs() < 1e-9);

    // the two energy expressions agree at the fixed point even off trees
    println!("vertex form {:.12}, edge form {:.12}", bp.energy, bp.edge_form);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}

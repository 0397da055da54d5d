// Free entropy by integrating the cavity energy over the activity, checked
// against log Z from enumeration, plus the a-priori energy bounds.

use cavity_core::cavity;
use cavity_core::exact::Oracle;
use cavity_core::network::fixtures;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let path = fixtures::path(8, 2);
    let oracle = Oracle::new(&path)?;
    for t in [0.5, 1.0, 4.0] {
        let phi = cavity::free_entropy(&path, t, 1e-8)?;
        let exact = oracle.log_z(t) / path.n_vertices() as f64;
        println!("t = {t}: φ = {:.10} (exact {exact:.10}, {} energy evaluations)", phi.value, phi.evaluations);
        assert!((phi.value - exact).abs() < 1e-6);
    }

    let star = fixtures::star(4, 1);
    for t in [0.5, 10.0] {
        let bounds = cavity::energy_bounds(&star, t)?;
        let energy = Oracle::new(&star)?.energy(t);
        println!("star, t = {t}: {:?} ≤ U = {energy:.6} ≤ {:.3}", bounds.lower, bounds.upper);
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}

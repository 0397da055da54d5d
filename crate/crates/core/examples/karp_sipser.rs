// The b = 1 limit on Poisson(c) trees reproduces the Karp–Sipser formula
// for the maximum matching of sparse random graphs.

use cavity_core::analytic::{self, LimitSpec, DEFAULT_GRID, DEFAULT_ROOT_TOL};
use cavity_core::ensembles::DegreeDistribution;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for c in [0.5, 1.0, 2.0, 2.718281828459045, 4.0] {
        let spec = LimitSpec::new(DegreeDistribution::poisson(c)?, 1)?;
        let minima = analytic::historical_minima(&spec, DEFAULT_GRID, DEFAULT_ROOT_TOL)?;
        let ks = analytic::karp_sipser(c)?;
        println!("c = {c:.4}: m_1 = {:.12}, Karp–Sipser = {ks:.12}, {} root(s)", minima.m_b, minima.roots.len());
        assert!((minima.m_b - ks).abs() < 1e-8);
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}

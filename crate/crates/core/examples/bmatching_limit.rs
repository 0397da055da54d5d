// Maximum b-matching density on Galton–Watson trees: roots of f∘f(s) = s,
// the historical minima of H and m_b = min H.

use cavity_core::analytic::{self, LimitSpec, DEFAULT_GRID, DEFAULT_ROOT_TOL};
use cavity_core::ensembles::DegreeDistribution;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let laws = [
        ("3-regular", DegreeDistribution::dirac(3)),
        ("Poisson(2)", DegreeDistribution::poisson(2.0)?),
        ("Poisson(4)", DegreeDistribution::poisson(4.0)?),
        ("{1: ½, 3: ½}", DegreeDistribution::explicit(vec![0.0, 0.5, 0.0, 0.5])?),
    ];
    for (name, pi) in laws {
        for b in 1..=3 {
            let spec = LimitSpec::new(pi.clone(), b)?;
            let r = analytic::historical_minima(&spec, DEFAULT_GRID, DEFAULT_ROOT_TOL)?;
            let roots: Vec<String> = r.roots.iter().map(|s| format!("{s:.4}")).collect();
            println!(
                "{name:>12}, b = {b}: m_b = {:.6}; roots [{}]; {} historical minim{}",
                r.m_b,
                roots.join(", "),
                r.historical_minima.len(),
                if r.historical_minima.len() == 1 { "um" } else { "a" }
            );
        }
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}

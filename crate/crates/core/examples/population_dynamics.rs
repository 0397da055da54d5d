// Population dynamics for the distributional fixed point P = Θ(Θ̄(P)):
// the nonzero mass s_n follows (f∘f)^n(s_0), and at the limit pool
// M(P) = ½ E[U] matches H(s).

use cavity_core::analytic::LimitSpec;
use cavity_core::ensembles::{rng_for, DegreeDistribution};
use cavity_core::rde::{self, RdeOptions};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let pi = DegreeDistribution::poisson(2.0)?;
    let spec = LimitSpec::new(pi.clone(), 2)?;
    let mut rng = rng_for(2024);
    let options = RdeOptions { pool: 20_000, iters: 30, plateau_stop: false };
    let run = rde::solve_rde(&pi, 2, 1.0, options, &mut rng)?;

    let mut expected = 1.0;
    for n in 1..=options.iters {
        expected = spec.ff(expected);
        if [1, 2, 5, 10, 30].contains(&n) {
            println!("n = {n:>2}: s_n = {:.6}, Monte Carlo {:.6}, (f∘f)^n(1) = {expected:.6}", run.s[n], run.s_mc[n]);
        }
    }
    let m = rde::m_of(&run.pool, &pi, 2, 20_000, &mut rng)?;
    let s_end = run.s[run.iterations];
    println!("M(P) = {:.5} ± {:.5}, H(s) = {:.5}", m.mean, m.stderr, spec.H(s_end));
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}

// Local measures: b-matching, exchangeable and tabulated, their cavity
// ratios at finite and infinite activity, and the sampled property checks.

use cavity_core::measure::{is_cavity_monotone_exchangeable, LocalMeasure};
use cavity_core::ExtReal;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let matching = LocalMeasure::bmatching(3, 1)?;
    // fields for Γ^e skip e itself: Z^{/e} = 1, Z^{\e} = 1 + 2
    let ratio = matching.cavity_ratio(0, &[ExtReal::ONE; 2])?;
    assert_eq!(ratio, ExtReal::Finite(1.0 / 3.0));
    println!("b=1, field (·,1,1): Γ = {ratio}, U(1,1,1) = {}", matching.energy(&[ExtReal::ONE; 3])?);

    // two saturated neighbours leave no room for a third edge
    let crowded = [ExtReal::Infinite, ExtReal::Infinite];
    println!("b=1, field (·,∞,∞): Γ = {}", matching.cavity_ratio(0, &crowded)?);
    println!("b=1, Γ̄ on (·,1,1) = {}", matching.infinite_cavity_ratio(0, &[1.0, 1.0])?);

    let coeffs = vec![1.0, 2.0, 1.5, 0.5];
    let smooth = LocalMeasure::exchangeable(coeffs.clone())?;
    println!("c = {coeffs:?}: cavity-monotone = {}", is_cavity_monotone_exchangeable(&coeffs));

    let table = LocalMeasure::table(2, [(vec![], 1.0), (vec![0], 1.0), (vec![1], 1.0), (vec![0, 1], 0.5)])?;
    println!("table measure: rank {}, spread {}", table.rank(), table.spread());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (name, mu) in [("bmatching(4,2)", LocalMeasure::bmatching(4, 2)?), ("exchangeable", smooth)] {
        let rayleigh = mu.check_rayleigh_sampled(200, &mut rng)?;
        let size = mu.check_size_increasing_sampled(200, &mut rng)?;
        println!("{name}: {} Rayleigh / {} size-increasing violations, matroid = {}", rayleigh.len(), size.len(), mu.support_is_matroid()?);
        assert!(rayleigh.is_empty() && size.is_empty());
    }

    let bad = LocalMeasure::exchangeable(vec![1.0, 0.1, 1.0])?;
    let found = bad.check_rayleigh_sampled(200, &mut rng)?;
    println!("c = (1, 0.1, 1): {} Rayleigh violations, worst excess {:.3e}", found.len(), found.iter().map(|v| v.excess).fold(0.0, f64::max));
    assert!(!found.is_empty());
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}

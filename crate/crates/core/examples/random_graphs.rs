// Seeded random graphs whose local limits are Galton–Watson trees, and
// round-tripping networks through their JSON form.

use cavity_core::ensembles::{self, DegreeDistribution};
use cavity_core::Network;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let er = ensembles::erdos_renyi(20_000, 3.0, 5)?;
    let net = er.bmatching(2)?;
    let tv = ensembles::total_variation(&net.degree_histogram(), &DegreeDistribution::poisson(3.0)?);
    println!("ER(20000, 3): {} edges, TV distance to Poisson(3) = {tv:.4}", net.n_edges());

    let regular = ensembles::random_regular(1000, 3, 5)?;
    println!("3-regular: {} edges, erased {} loops and {} repeats", regular.edges.len(), regular.erased_loops, regular.erased_multi);

    let pi = DegreeDistribution::explicit(vec![0.1, 0.3, 0.3, 0.3])?;
    let config = ensembles::configuration_model_from(&pi, 1000, 5)?;
    println!("configuration model, mean degree {:.3} (law mean {:.3})", 2.0 * config.edges.len() as f64 / 1000.0, pi.mean());

    let small = ensembles::erdos_renyi(6, 1.5, 1)?.bmatching(1)?;
    let text = small.save();
    let back = Network::load(&text)?;
    assert_eq!(back.save(), text);
    println!("{text}");
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}

use cavity_core::ensembles::{self, DegreeDistribution};

#[test]
fn erdos_renyi_degrees_are_poisson() {
    let pi = DegreeDistribution::poisson(3.0).unwrap();
    for seed in 0..5 {
        let g = ensembles::erdos_renyi(100_000, 3.0, seed).unwrap();
        let net = g.bmatching(1).unwrap();
        let tv = ensembles::total_variation(&net.degree_histogram(), &pi);
        assert!(tv < 0.02, "seed {seed}: TV {tv}");
    }
}

#[test]
fn regular_and_configuration_models_match_their_laws() {
    let g = ensembles::random_regular(10_000, 3, 1).unwrap();
    let tv = ensembles::total_variation(&g.bmatching(1).unwrap().degree_histogram(), &DegreeDistribution::dirac(3));
    assert!(tv < 0.01, "TV {tv}");

    let pi = DegreeDistribution::explicit(vec![0.2, 0.3, 0.1, 0.4]).unwrap();
    let g = ensembles::configuration_model_from(&pi, 50_000, 2).unwrap();
    let tv = ensembles::total_variation(&g.bmatching(1).unwrap().degree_histogram(), &pi);
    assert!(tv < 0.02, "TV {tv}");
}

#[test]
fn generators_are_seeded() {
    let a = ensembles::erdos_renyi(2000, 2.0, 17).unwrap();
    let b = ensembles::erdos_renyi(2000, 2.0, 17).unwrap();
    let c = ensembles::erdos_renyi(2000, 2.0, 18).unwrap();
    assert_eq!(a.edges, b.edges);
    assert_ne!(a.edges, c.edges);
}

//! Empirical frequencies against exact marginals.

use lrp_core::experiments::{distance_threshold_probability, good_block_fractions, ExperimentConfig};
use lrp_core::graphdist::exact_distance_distribution;
use lrp_core::renorm::{block_edge_marginal, BlockGrid, RenormGraph};
use lrp_core::sampler::sample_box_with_table;
use lrp_core::{BoxShape, KernelSpec, KernelTable};
use rayon::prelude::*;

fn three_sigma(p: f64, trials: usize) -> f64 {
    3.0 * (p * (1.0 - p) / trials as f64).sqrt()
}

#[test]
fn short_edge_frequency_matches_kernel() {
    let spec = KernelSpec::self_similar(1, 1.0).unwrap();
    let shape = BoxShape::cube(1, 5).unwrap();
    let table = KernelTable::for_shape(spec, &shape).unwrap();
    let replicas = 200_000u64;
    let hits = (0..replicas)
        .into_par_iter()
        .filter(|&r| sample_box_with_table(&table, &shape, r).unwrap().has_long_edge(0, 2))
        .count();
    let freq = hits as f64 / replicas as f64;
    assert!((freq - 0.25).abs() <= 0.005, "{freq}");
}

#[test]
fn coarse_edge_frequency_matches_block_marginal() {
    let spec = KernelSpec::self_similar(1, 1.0).unwrap();
    let shape = BoxShape::cube(1, 6).unwrap();
    let table = KernelTable::for_shape(spec, &shape).unwrap();
    let marginal = block_edge_marginal(&spec, 2, &[2]).unwrap();
    assert!((marginal - 0.25).abs() < 1e-12);
    let replicas = 100_000usize;
    let hits = (0..replicas as u64)
        .into_par_iter()
        .filter(|&r| {
            let env = sample_box_with_table(&table, &shape, r).unwrap();
            let grid = BlockGrid::new(&shape, 2).unwrap();
            RenormGraph::new(&env, grid).unwrap().is_adjacent(0, 2)
        })
        .count();
    let freq = hits as f64 / replicas as f64;
    assert!((freq - marginal).abs() <= three_sigma(marginal, replicas), "{freq}");
}

#[test]
fn threshold_frequency_matches_exhaustive_value() {
    let spec = KernelSpec::self_similar(1, 1.0).unwrap();
    let shape = BoxShape::cube(1, 5).unwrap();
    let exact = exact_distance_distribution(&spec, &shape, &[(0, 4)], 2).unwrap()[0];
    let replicas = 20_000;
    let p = distance_threshold_probability(&spec, &shape, 0, 4, 2, replicas, 5).unwrap();
    assert!((p.estimate - exact).abs() <= three_sigma(exact, replicas), "{p:?}");
}

#[test]
fn good_fraction_grows_as_delta_shrinks() {
    let config = ExperimentConfig {
        sizes: vec![64],
        replicas: 500,
        block_k: 8,
        seed: 3,
        ..ExperimentConfig::default()
    };
    let deltas = [1.0, 0.5, 0.25, 0.125, 0.05];
    let fractions = good_block_fractions(&config, 0.47, &deltas).unwrap();
    for pair in fractions.windows(2) {
        assert!(pair[1].fraction >= pair[0].fraction, "{pair:?}");
    }
    assert_eq!(fractions.last().unwrap().fraction, 1.0);
    assert!(fractions[0].fraction < 1.0);
}

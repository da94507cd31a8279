#![allow(dead_code)]

use stabletree::synth::sample_synthetic;
use stabletree::{build_tree, fit_forest, BuildConfig, Dataset, Forest, ForestConfig, Tree};

/// Training data and a 100-tree forest on the benchmark, both from `seed`.
pub fn benchmark_oracle(seed: u64) -> (Dataset, Forest) {
    let data = sample_synthetic::<f64>(1_000, seed).unwrap();
    let forest = fit_forest(
        &data,
        &ForestConfig {
            tree_count: 100,
            seed,
            ..Default::default()
        },
    )
    .unwrap();
    (data, forest)
}

pub fn distill(data: &Dataset, forest: &Forest, cfg: &BuildConfig) -> Tree {
    build_tree(data, forest, cfg).unwrap()
}

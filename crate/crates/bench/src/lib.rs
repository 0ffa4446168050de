//! Deterministic inputs for the estimator benchmarks.

use std::collections::HashMap;

use cmdtriage_core::embed::{EmbeddingTable, Vector};
use cmdtriage_core::uq::SampleSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WORDS: [&str; 12] = [
    "red", "blue", "green", "yellow", "block", "bowl", "corner", "top", "bottom", "left", "right", "cup",
];

/// `h` random vectors of dimension `dim` wrapped as a sample set.
pub fn sample_set(h: usize, dim: usize, seed: u64) -> SampleSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors = (0..h)
        .map(|_| Vector((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect();
    SampleSet::from_vectors(vectors).expect("h >= 2")
}

/// `n` scores on a coarse grid (so ties occur) with alternating labels.
pub fn scored_labels(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = (0..n).map(|_| rng.random_range(0..100) as f64 / 100.0).collect();
    let labels = (0..n).map(|i| i % 2 == 0).collect();
    (scores, labels)
}

pub fn embedding_table(dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries: HashMap<String, Vector> = WORDS
        .iter()
        .map(|w| (w.to_string(), Vector((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())))
        .collect();
    EmbeddingTable::new(dim, entries).expect("consistent dimensions")
}

/// Skill-call lines over the benchmark vocabulary.
pub fn generations(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let colors = &WORDS[..4];
    (0..n)
        .map(|_| {
            let a = colors[rng.random_range(0..colors.len())];
            let b = colors[rng.random_range(0..colors.len())];
            format!("robot.pick_and_place({a} block, {b} bowl)")
        })
        .collect()
}

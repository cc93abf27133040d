//! Shared fixtures for the alignment benchmarks.

use multisync::{generate_synthetic_corpus, FeatureSequence, SyntheticCorpusSpec};

/// `versions` synthetic versions around `length` frames each.
pub fn corpus(length: usize, versions: usize, seed: u64) -> Vec<FeatureSequence> {
    generate_synthetic_corpus(&SyntheticCorpusSpec {
        base_length: length,
        num_versions: versions,
        seed,
        ..Default::default()
    })
    .expect("valid benchmark spec")
    .versions
}

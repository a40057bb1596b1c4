#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use rener::harness::ExperimentConfig;

pub const VOCAB: &[&str] = &[
    "court", "minister", "party", "vote", "river", "city", "museum", "protein", "cell", "orbit", "planet", "league",
    "match", "goal", "bank", "market", "senate", "treaty", "border", "festival", "album", "song", "novel", "poet",
    "storm", "harbor", "bridge", "school", "company", "union",
];

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Loads a fixture config with its cache and report folders moved under `out`.
pub fn fixture_config(relative: &str, out: &Path) -> ExperimentConfig {
    let mut config = ExperimentConfig::load(&fixtures().join(relative)).expect("fixture config loads");
    config.output.cache_dir = out.join("cache");
    config.output.report_dir = out.join("reports");
    config
}

pub fn random_text(rng: &mut StdRng, min: usize, max: usize) -> String {
    let n = rng.random_range(min..=max);
    (0..n)
        .map(|_| VOCAB[rng.random_range(0..VOCAB.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}

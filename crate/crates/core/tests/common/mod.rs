#![allow(dead_code)]

pub mod mock_http;

use refrank_core::scorer::{LatentSource, OracleConfig, SyntheticOracle};
use refrank_core::synthetic::{Fixture, SyntheticSpec, generate};

pub fn fixture(seed: u64, queries: usize, docs: usize) -> Fixture {
    generate(SyntheticSpec::new(seed, queries, docs)).expect("fixture")
}

/// Oracle whose latent relevance matches `fixture(seed, ..)`.
pub fn oracle_cfg(seed: u64) -> OracleConfig {
    OracleConfig::new(seed, LatentSource::Synthetic { seed })
}

pub fn oracle(cfg: OracleConfig) -> SyntheticOracle {
    SyntheticOracle::new(cfg).expect("oracle")
}

/// Mean and standard error of paired differences.
pub fn paired_stats(diffs: &[f64]) -> (f64, f64) {
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

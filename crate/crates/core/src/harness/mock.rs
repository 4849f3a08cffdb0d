//! Deterministic stand-in scorers for tests and dry runs.

use super::{ScoreError, Scorer};
use crate::lexgen::derive_seed;

/// Always prefers the first candidate (the correct form), or the second
/// when inverted.
#[derive(Clone, Debug)]
pub struct OracleScorer {
    name: String,
    inverted: bool,
}

impl Default for OracleScorer {
    fn default() -> Self {
        OracleScorer { name: "oracle".into(), inverted: false }
    }
}

impl OracleScorer {
    pub fn inverted() -> Self {
        OracleScorer { name: "inverted-oracle".into(), inverted: true }
    }
}

impl Scorer for OracleScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&mut self, _: &[String], _: [&str; 2]) -> Result<[f64; 2], ScoreError> {
        Ok(if self.inverted { [-1.0, 0.0] } else { [0.0, -1.0] })
    }
}

/// Equal log-probabilities for both candidates.
#[derive(Clone, Debug)]
pub struct ConstantScorer {
    pub value: f64,
}

impl Default for ConstantScorer {
    fn default() -> Self {
        ConstantScorer { value: -2.0 }
    }
}

impl Scorer for ConstantScorer {
    fn name(&self) -> &str {
        "constant"
    }

    fn score(&mut self, _: &[String], _: [&str; 2]) -> Result<[f64; 2], ScoreError> {
        Ok([self.value, self.value])
    }
}

/// Prefers one candidate at random, as a pure function of (seed, request).
#[derive(Clone, Debug)]
pub struct CoinFlipScorer {
    name: String,
    seed: u64,
}

impl CoinFlipScorer {
    pub fn new(seed: u64) -> Self {
        CoinFlipScorer { name: format!("coin-{}", seed), seed }
    }
}

impl Scorer for CoinFlipScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&mut self, prefix: &[String], candidates: [&str; 2]) -> Result<[f64; 2], ScoreError> {
        let mut key = prefix.join("\u{1f}");
        key.push('\u{1e}');
        key.push_str(candidates[0]);
        key.push('\u{1e}');
        key.push_str(candidates[1]);
        let heads = derive_seed(self.seed, &key) >> 63 == 1;
        Ok(if heads { [-1.0, -2.0] } else { [-2.0, -1.0] })
    }
}

/// Records every prefix it is shown; scores like the oracle.
#[derive(Clone, Debug, Default)]
pub struct RecordingScorer {
    pub seen: Vec<Vec<String>>,
}

impl Scorer for RecordingScorer {
    fn name(&self) -> &str {
        "recording"
    }

    fn score(&mut self, prefix: &[String], _: [&str; 2]) -> Result<[f64; 2], ScoreError> {
        self.seen.push(prefix.to_vec());
        Ok([0.0, -1.0])
    }
}

//! Long-distance number-agreement benchmarks built from Universal
//! Dependencies treebanks.
//!
//! The pipeline: parse a treebank ([`conllu`]), mine agreement
//! constructions and extract original test items ([`miner`]), derive nonce
//! variants by morphology-preserving substitution ([`lexgen`]), train n-gram
//! baselines ([`ngram`]), score items with any language model
//! ([`harness`]) and aggregate the results ([`stats`]).
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common case.

pub mod conllu;
pub mod harness;
pub mod jsonl;
pub mod lexgen;
pub mod miner;
pub mod ngram;
pub mod num;
pub mod stats;

pub use conllu::{Features, Sentence, Token};
pub use harness::{EvalRecord, Evaluation, Outcome, Scorer};
pub use miner::{Construction, GramNumber, Instance, ItemKind, TestItem};
pub use ngram::{FrequencyTable, Vocabulary};
pub use num::Real;

pub type KnModelF64 = ngram::KnModel<f64>;
pub type KnModelF32 = ngram::KnModel<f32>;
pub type AccuracyCellF64 = stats::AccuracyCell<f64>;
pub type CorrelationF64 = stats::Correlation<f64>;

//! Scoring test items with pluggable language models.
//!
//! A [`Scorer`] maps a prefix and two candidate forms to two natural-log
//! probabilities. The harness always passes `[correct, wrong]` and counts an
//! item correct only when the first log-probability is strictly larger.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::miner::{ItemKind, TestItem};
use crate::ngram::{FrequencyTable, KnModel, BOS_ID};
use crate::num::Real;

pub mod external;
pub mod mock;

pub use external::{ExternalScorer, ProtocolError};

#[derive(Debug, Error)]
pub enum ScoreError {
    /// The scorer could not score this item but can go on.
    #[error("{0}")]
    Item(String),
    /// The scorer is unusable; evaluation stops.
    #[error(transparent)]
    Fatal(#[from] ProtocolError),
}

pub trait Scorer {
    fn name(&self) -> &str;

    /// Validation perplexity reported by the model, if any.
    fn perplexity(&self) -> Option<f64> {
        None
    }

    fn score(&mut self, prefix: &[String], candidates: [&str; 2]) -> Result<[f64; 2], ScoreError>;
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn perplexity(&self) -> Option<f64> {
        (**self).perplexity()
    }

    fn score(&mut self, prefix: &[String], candidates: [&str; 2]) -> Result<[f64; 2], ScoreError> {
        (**self).score(prefix, candidates)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Correct,
    Incorrect,
    Tie,
}

impl Outcome {
    pub fn from_logprobs(correct: f64, wrong: f64) -> Outcome {
        if correct > wrong {
            Outcome::Correct
        } else if correct == wrong {
            Outcome::Tie
        } else {
            Outcome::Incorrect
        }
    }

    /// Ties count as incorrect.
    pub fn is_correct(self) -> bool {
        self == Outcome::Correct
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Correct => "correct",
            Outcome::Incorrect => "incorrect",
            Outcome::Tie => "tie",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub item_id: String,
    pub construction_id: String,
    pub kind: ItemKind,
    pub n_attractors: usize,
    pub logprob_correct: f64,
    pub logprob_wrong: f64,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub item_id: String,
    pub message: String,
}

/// Records for one scorer plus the items it failed on.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Evaluation {
    pub scorer: String,
    pub perplexity: Option<f64>,
    pub records: Vec<EvalRecord>,
    pub errored: Vec<ItemFailure>,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no scorers given")]
    NoScorers,
    #[error("window must be at least 1")]
    ZeroWindow,
    #[error("two scorers share the name `{0}`")]
    DuplicateName(String),
    #[error("scorer `{scorer}` failed on item {item_id}: {source}")]
    Fatal { scorer: String, item_id: String, source: ProtocolError },
}

/// The prefix a scorer sees under a window of `k` tokens: the last `k - 1`.
pub fn window_prefix(prefix: &[String], window: Option<usize>) -> &[String] {
    match window {
        Some(k) => &prefix[prefix.len().saturating_sub(k.saturating_sub(1))..],
        None => prefix,
    }
}

/// Scores every item in order, one record per successfully scored item.
pub fn evaluate<S: Scorer + ?Sized>(
    testset: &[TestItem],
    scorer: &mut S,
    window: Option<usize>,
) -> Result<Evaluation, HarnessError> {
    if window == Some(0) {
        return Err(HarnessError::ZeroWindow);
    }
    let mut eval =
        Evaluation { scorer: scorer.name().to_owned(), perplexity: scorer.perplexity(), ..Evaluation::default() };
    for item in testset {
        let prefix = window_prefix(&item.prefix, window);
        match scorer.score(prefix, [&item.correct_form, &item.wrong_form]) {
            Ok([c, w]) if c.is_finite() && w.is_finite() => eval.records.push(EvalRecord {
                item_id: item.item_id.clone(),
                construction_id: item.construction_id.clone(),
                kind: item.kind,
                n_attractors: item.n_attractors,
                logprob_correct: c,
                logprob_wrong: w,
                outcome: Outcome::from_logprobs(c, w),
            }),
            Ok(_) => eval
                .errored
                .push(ItemFailure { item_id: item.item_id.clone(), message: "non-finite log-probability".into() }),
            Err(ScoreError::Item(message)) => eval.errored.push(ItemFailure { item_id: item.item_id.clone(), message }),
            Err(ScoreError::Fatal(source)) => {
                return Err(HarnessError::Fatal { scorer: eval.scorer, item_id: item.item_id.clone(), source })
            }
        }
    }
    if !eval.errored.is_empty() {
        log::warn!("scorer {}: {} items failed", eval.scorer, eval.errored.len());
    }
    Ok(eval)
}

/// Evaluates each scorer independently; results keyed by scorer name.
pub fn batch_evaluate(
    testset: &[TestItem],
    scorers: Vec<(Box<dyn Scorer + '_>, Option<usize>)>,
) -> Result<BTreeMap<String, Evaluation>, HarnessError> {
    if scorers.is_empty() {
        return Err(HarnessError::NoScorers);
    }
    let mut out = BTreeMap::new();
    for (mut scorer, window) in scorers {
        let name = scorer.name().to_owned();
        if out.contains_key(&name) {
            return Err(HarnessError::DuplicateName(name));
        }
        let eval = evaluate(testset, &mut scorer, window)?;
        out.insert(name, eval);
    }
    Ok(out)
}

/// Fraction of records with a correct outcome.
pub fn accuracy(records: &[EvalRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.outcome.is_correct()).count() as f64 / records.len() as f64
}

/// Native n-gram scorer. The prefix is read as a sentence start, so the
/// history is padded with `<s>`.
pub struct KnScorer<'m, T> {
    model: &'m KnModel<T>,
    name: String,
}

impl<'m, T: Real> KnScorer<'m, T> {
    pub fn new(model: &'m KnModel<T>, name: impl Into<String>) -> Self {
        KnScorer { model, name: name.into() }
    }

    fn history(&self, prefix: &[String]) -> Vec<u32> {
        let keep = self.model.order() - 1;
        let tail = &prefix[prefix.len().saturating_sub(keep)..];
        let mut h = vec![BOS_ID; keep - tail.len()];
        h.extend(self.model.encode(tail));
        h
    }
}

impl<T: Real> Scorer for KnScorer<'_, T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn perplexity(&self) -> Option<f64> {
        self.model.valid_perplexity
    }

    fn score(&mut self, prefix: &[String], candidates: [&str; 2]) -> Result<[f64; 2], ScoreError> {
        let h = self.history(prefix);
        let v = self.model.vocab();
        Ok(candidates.map(|c| self.model.logprob_ids(&h, v.id(c)).to_f64_lossy()))
    }
}

/// Unigram baseline as a scorer: add-one smoothed relative frequencies.
/// Equal counts are broken toward the lexicographically smaller form, the
/// same choice [`crate::ngram::unigram_choose`] makes.
pub struct UnigramScorer<'f> {
    freq: &'f FrequencyTable,
    name: String,
}

impl<'f> UnigramScorer<'f> {
    pub fn new(freq: &'f FrequencyTable, name: impl Into<String>) -> Self {
        UnigramScorer { freq, name: name.into() }
    }
}

impl Scorer for UnigramScorer<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&mut self, _prefix: &[String], [a, b]: [&str; 2]) -> Result<[f64; 2], ScoreError> {
        let denom = (self.freq.total() + self.freq.distinct() as u64 + 1) as f64;
        let lp = |w: &str| ((self.freq.get(w) + 1) as f64 / denom).ln();
        let (mut la, mut lb) = (lp(a), lp(b));
        if la == lb && a != b {
            // nudge the loser down by a relative 1e-12
            if a < b {
                lb -= lb.abs().max(1.0) * 1e-12;
            } else {
                la -= la.abs().max(1.0) * 1e-12;
            }
        }
        Ok([la, lb])
    }
}

#[cfg(test)]
mod tests {
    use super::mock::*;
    use super::*;

    fn item(i: usize, prefix_len: usize) -> TestItem {
        TestItem {
            item_id: format!("i{i}"),
            construction_id: "NOUN VERB VERB".into(),
            kind: if i.is_multiple_of(2) { ItemKind::Original } else { ItemKind::Nonce },
            source_sent_id: "s".into(),
            variant_index: 0,
            prefix: (0..prefix_len).map(|k| format!("w{k}")).collect(),
            correct_form: "goes".into(),
            wrong_form: "go".into(),
            cue_offset: Some(0),
            n_attractors: i % 3,
            fallback_slots: None,
            filler: false,
        }
    }

    #[test]
    fn oracle_inverted_constant() {
        let items: Vec<_> = (0..10).map(|i| item(i, 5)).collect();
        let e = evaluate(&items, &mut OracleScorer::default(), None).unwrap();
        assert_eq!(accuracy(&e.records), 1.0);
        let e = evaluate(&items, &mut OracleScorer::inverted(), None).unwrap();
        assert_eq!(accuracy(&e.records), 0.0);
        let e = evaluate(&items, &mut ConstantScorer::default(), None).unwrap();
        assert!(e.records.iter().all(|r| r.outcome == Outcome::Tie));
        assert_eq!(accuracy(&e.records), 0.0);
    }

    #[test]
    fn window_truncates_prefix() {
        let items = vec![item(0, 12), item(1, 2)];
        let mut rec = RecordingScorer::default();
        evaluate(&items, &mut rec, Some(5)).unwrap();
        assert_eq!(rec.seen[0], vec!["w8", "w9", "w10", "w11"]);
        assert_eq!(rec.seen[1], vec!["w0", "w1"]);
        assert!(matches!(evaluate(&items, &mut rec, Some(0)), Err(HarnessError::ZeroWindow)));
        assert!(window_prefix(&items[0].prefix, Some(1)).is_empty());
    }

    #[test]
    fn batch_requires_scorers_and_unique_names() {
        let items = vec![item(0, 3)];
        assert!(matches!(batch_evaluate(&items, vec![]), Err(HarnessError::NoScorers)));
        let dup: Vec<(Box<dyn Scorer>, Option<usize>)> =
            vec![(Box::new(OracleScorer::default()), None), (Box::new(OracleScorer::default()), None)];
        assert!(matches!(batch_evaluate(&items, dup), Err(HarnessError::DuplicateName(_))));
        let one: Vec<(Box<dyn Scorer>, Option<usize>)> = vec![(Box::new(OracleScorer::default()), None)];
        let out = batch_evaluate(&items, one).unwrap();
        let single = evaluate(&items, &mut OracleScorer::default(), None).unwrap();
        assert_eq!(out["oracle"], single);
    }

    #[test]
    fn item_failures_are_recorded_not_fatal() {
        struct Flaky;
        impl Scorer for Flaky {
            fn name(&self) -> &str {
                "flaky"
            }
            fn score(&mut self, p: &[String], _: [&str; 2]) -> Result<[f64; 2], ScoreError> {
                if p.len() == 3 {
                    Err(ScoreError::Item("nope".into()))
                } else if p.len() == 4 {
                    Ok([f64::NAN, 0.0])
                } else {
                    Ok([0.0, -1.0])
                }
            }
        }
        let items = vec![item(0, 2), item(1, 3), item(2, 4)];
        let e = evaluate(&items, &mut Flaky, None).unwrap();
        assert_eq!(e.records.len(), 1);
        assert_eq!(e.errored.len(), 2);
        assert_eq!(e.errored[0].item_id, "i1");
    }

    #[test]
    fn unigram_scorer_follows_unigram_choice() {
        let mut f = FrequencyTable::new();
        f.add("dogs", 500);
        f.add("dog", 900);
        f.add("cat", 3);
        f.add("cats", 3);
        let mut s = UnigramScorer::new(&f, "unigram");
        let [a, b] = s.score(&[], ["dog", "dogs"]).unwrap();
        assert!(a > b);
        let [a, b] = s.score(&[], ["cats", "cat"]).unwrap();
        assert!(a < b, "tie goes to the lexicographically smaller form");
        let [a, b] = s.score(&[], ["cat", "cats"]).unwrap();
        assert!(a > b);
        assert!(a < 0.0 && b < 0.0);
    }
}

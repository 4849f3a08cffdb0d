//! Substitution lexicon, Number counterparts, and nonce-sentence generation.
//!
//! # Random generator
//!
//! All sampling uses ChaCha8 (`rand_chacha` 0.3, `SeedableRng::seed_from_u64`).
//! Each item gets its own stream seeded with [`derive_seed`]`(master, item_id)`,
//! which is SplitMix64 applied to `master ^ fnv1a64(item_id)`. A uniform index
//! below `n` is drawn by rejection from raw `next_u64` output (see
//! [`uniform_index`]), so the byte stream, not a library sampling routine,
//! defines the result. Within an item, variants are generated in order
//! 1..=n and, inside a variant, slots are drawn left to right with the
//! target last.

use std::collections::{BTreeMap, HashMap};

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conllu::{Features, Sentence, Token};
use crate::miner::{count_attractors, GramNumber, ItemKind, TestItem};
use crate::ngram::Vocabulary;

/// Content-word POS tags; everything else is copied verbatim into nonce sentences.
pub const CONTENT_POS: [&str; 6] = ["NOUN", "VERB", "ADJ", "PROPN", "NUM", "ADV"];

pub fn is_content(upos: &str) -> bool {
    CONTENT_POS.contains(&upos)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexEntry {
    pub form: String,
    pub lemma: String,
    pub frequency: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LexKey {
    pub upos: String,
    pub feats: Features,
}

/// Content words keyed by (POS, full feature bundle).
#[derive(Clone, Debug, Default)]
pub struct SubstitutionLexicon {
    pub entries: BTreeMap<LexKey, Vec<LexEntry>>,
    pub ambiguity_threshold: f64,
}

impl SubstitutionLexicon {
    pub fn pool(&self, upos: &str, feats: &Features) -> &[LexEntry] {
        // Avoid allocating a key for the common miss on function words.
        if !is_content(upos) {
            return &[];
        }
        self.entries.get(&LexKey { upos: upos.to_owned(), feats: feats.clone() }).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A form is kept under a content POS only if occurrences with any other
/// POS make up at most `ambiguity_threshold` of its treebank occurrences.
pub fn build_lexicon(treebank: &[Sentence], ambiguity_threshold: f64) -> SubstitutionLexicon {
    let mut pos_counts: HashMap<&str, HashMap<&str, u64>> = HashMap::new();
    for t in treebank.iter().flat_map(|s| &s.tokens) {
        *pos_counts.entry(&t.form).or_default().entry(&t.upos).or_default() += 1;
    }
    let unambiguous = |form: &str, upos: &str| {
        let counts = &pos_counts[form];
        let total: u64 = counts.values().sum();
        let own = counts.get(upos).copied().unwrap_or(0);
        (total - own) as f64 <= ambiguity_threshold * total as f64
    };

    let mut raw: BTreeMap<LexKey, FormCounts<'_>> = BTreeMap::new();
    for t in treebank.iter().flat_map(|s| &s.tokens) {
        if !is_content(&t.upos) || t.form.is_empty() || !unambiguous(&t.form, &t.upos) {
            continue;
        }
        let slot =
            raw.entry(LexKey { upos: t.upos.clone(), feats: t.feats.clone() }).or_default().entry(&t.form).or_default();
        slot.0 += 1;
        *slot.1.entry(&t.lemma).or_default() += 1;
    }

    let entries = raw
        .into_iter()
        .map(|(key, forms)| {
            let mut list: Vec<LexEntry> = forms
                .into_iter()
                .map(|(form, (frequency, lemmas))| LexEntry {
                    form: form.to_owned(),
                    lemma: most_frequent(lemmas).to_owned(),
                    frequency,
                })
                .collect();
            list.sort_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.form.cmp(&b.form)));
            (key, list)
        })
        .collect();
    SubstitutionLexicon { entries, ambiguity_threshold }
}

/// form -> (count, lemma -> count)
type FormCounts<'a> = BTreeMap<&'a str, (u64, BTreeMap<&'a str, u64>)>;

/// Highest count, ties to the lexicographically smallest key.
fn most_frequent(counts: BTreeMap<&str, u64>) -> &str {
    let mut best: Option<(&str, u64)> = None;
    for (k, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((k, c));
        }
    }
    best.map(|(k, _)| k).unwrap_or("")
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct CounterpartKey {
    lemma: String,
    upos: String,
    feats: Features,
    number: String,
}

/// Maps (lemma, POS, features other than Number, Number) to the form
/// attested for it in the treebank.
#[derive(Clone, Debug, Default)]
pub struct CounterpartIndex {
    map: HashMap<CounterpartKey, String>,
}

impl CounterpartIndex {
    pub fn lookup(&self, lemma: &str, upos: &str, feats_without_number: &Features, number: &str) -> Option<&str> {
        self.map
            .get(&CounterpartKey {
                lemma: lemma.to_owned(),
                upos: upos.to_owned(),
                feats: feats_without_number.clone(),
                number: number.to_owned(),
            })
            .map(String::as_str)
    }

    /// The form with the same lemma, POS and features but the opposite
    /// Number (Sing/Plur only).
    pub fn counterpart(&self, lemma: &str, upos: &str, feats: &Features) -> Option<&str> {
        let flipped = GramNumber::parse(feats.get("Number")).opposite()?;
        self.lookup(lemma, upos, &feats.without("Number"), flipped.as_str())
    }

    pub fn counterpart_of(&self, token: &Token) -> Option<&str> {
        self.counterpart(&token.lemma, &token.upos, &token.feats)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Every Number-bearing token contributes its form; when a key has several
/// forms the most frequent wins, ties to the lexicographically smallest.
pub fn build_counterpart_index(treebank: &[Sentence]) -> CounterpartIndex {
    let mut counts: HashMap<CounterpartKey, BTreeMap<&str, u64>> = HashMap::new();
    for t in treebank.iter().flat_map(|s| &s.tokens) {
        let Some(number) = t.feats.get("Number") else {
            continue;
        };
        let key = CounterpartKey {
            lemma: t.lemma.clone(),
            upos: t.upos.clone(),
            feats: t.feats.without("Number"),
            number: number.to_owned(),
        };
        *counts.entry(key).or_default().entry(&t.form).or_default() += 1;
    }
    let map = counts.into_iter().map(|(k, forms)| (k, most_frequent(forms).to_owned())).collect();
    CounterpartIndex { map }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-item seed, independent of processing order.
pub fn derive_seed(master: u64, item_id: &str) -> u64 {
    splitmix64(master ^ fnv1a64(item_id.as_bytes()))
}

pub fn item_rng(master: u64, item_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, item_id))
}

/// Uniform integer in `0..n` by rejection sampling on 64-bit draws.
pub fn uniform_index<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> usize {
    assert!(n > 0, "uniform_index over an empty range");
    let n = n as u64;
    let limit = u64::MAX - (u64::MAX % n);
    loop {
        let v = rng.next_u64();
        if v < limit {
            return (v % n) as usize;
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenerateError {
    #[error("item {0} is not an original item")]
    NotOriginal(String),
    #[error("item {item} does not fit sentence {sent_id}")]
    SentenceMismatch { item: String, sent_id: String },
    #[error("no treebank sentence has a Number-bearing content word with a usable counterpart")]
    NoFillerCandidates,
}

/// Everything nonce generation needs besides the item itself.
#[derive(Clone, Copy)]
pub struct NonceResources<'a> {
    pub lexicon: &'a SubstitutionLexicon,
    pub counterparts: &'a CounterpartIndex,
    pub vocab: &'a Vocabulary,
}

impl NonceResources<'_> {
    /// Candidates for a target slot: a different form whose counterpart
    /// exists and both forms are in the vocabulary.
    fn target_candidates(&self, token: &Token) -> Vec<(&str, &str)> {
        self.lexicon
            .pool(&token.upos, &token.feats)
            .iter()
            .filter(|e| e.form != token.form && self.vocab.contains(&e.form))
            .filter_map(|e| {
                let wrong = self.counterparts.counterpart(&e.lemma, &token.upos, &token.feats)?;
                (wrong != e.form && self.vocab.contains(wrong)).then_some((e.form.as_str(), wrong))
            })
            .collect()
    }
}

/// Produces `n_variants` nonce versions of an original item. Content words
/// in the prefix and the target are replaced by a uniformly drawn different
/// form with the same POS and features; function words and punctuation are
/// copied. A slot with no candidate keeps its word and is listed in
/// `fallback_slots`.
pub fn generate_nonce(
    item: &TestItem,
    sentence: &Sentence,
    res: NonceResources<'_>,
    n_variants: u32,
    seed: u64,
) -> Result<Vec<TestItem>, GenerateError> {
    if item.kind != ItemKind::Original {
        return Err(GenerateError::NotOriginal(item.item_id.clone()));
    }
    let target_index = item.target_index();
    let fits = sentence.len() >= target_index
        && sentence.tokens[..target_index - 1].iter().zip(&item.prefix).all(|(t, f)| &t.form == f)
        && sentence.tokens[target_index - 1].form == item.correct_form;
    if !fits {
        return Err(GenerateError::SentenceMismatch { item: item.item_id.clone(), sent_id: sentence.sent_id.clone() });
    }

    let prefix_tokens = &sentence.tokens[..target_index - 1];
    let target = &sentence.tokens[target_index - 1];
    // Pools depend only on the slot, not on the variant.
    let prefix_pools: Vec<Option<Vec<&str>>> = prefix_tokens
        .iter()
        .map(|t| {
            is_content(&t.upos).then(|| {
                res.lexicon
                    .pool(&t.upos, &t.feats)
                    .iter()
                    .filter(|e| e.form != t.form)
                    .map(|e| e.form.as_str())
                    .collect()
            })
        })
        .collect();
    let target_pool = is_content(&target.upos).then(|| res.target_candidates(target));

    let mut rng = item_rng(seed, &item.item_id);
    let mut variants = Vec::with_capacity(n_variants as usize);
    for v in 1..=n_variants {
        let mut prefix = Vec::with_capacity(prefix_tokens.len());
        let mut fallback = Vec::new();
        for (pos, (token, pool)) in prefix_tokens.iter().zip(&prefix_pools).enumerate() {
            match pool {
                None => prefix.push(token.form.clone()),
                Some(p) if p.is_empty() => {
                    fallback.push(pos);
                    prefix.push(token.form.clone());
                }
                Some(p) => prefix.push(p[uniform_index(&mut rng, p.len())].to_owned()),
            }
        }
        let (correct, wrong) = match &target_pool {
            None => (item.correct_form.clone(), item.wrong_form.clone()),
            Some(p) if p.is_empty() => {
                fallback.push(prefix.len());
                (item.correct_form.clone(), item.wrong_form.clone())
            }
            Some(p) => {
                let (c, w) = p[uniform_index(&mut rng, p.len())];
                (c.to_owned(), w.to_owned())
            }
        };

        let n_attractors = match item.cue_offset {
            Some(off) => {
                let mut substituted = sentence.clone();
                substituted.tokens.truncate(target_index);
                for (t, f) in substituted.tokens.iter_mut().zip(&prefix) {
                    t.form.clone_from(f);
                }
                let cue = &substituted.tokens[off];
                count_attractors(&substituted, off + 1, target_index, &cue.upos, GramNumber::of(cue))
            }
            None => 0,
        };

        variants.push(TestItem {
            item_id: format!("{}#n{}", item.item_id, v),
            construction_id: item.construction_id.clone(),
            kind: ItemKind::Nonce,
            source_sent_id: item.source_sent_id.clone(),
            variant_index: v,
            prefix,
            correct_form: correct,
            wrong_form: wrong,
            cue_offset: item.cue_offset,
            n_attractors,
            fallback_slots: Some(fallback),
            filler: item.filler,
        });
    }
    Ok(variants)
}

/// Nonce variants for a whole test set. Items are processed in parallel;
/// per-item seeding keeps the output independent of scheduling.
pub fn generate_nonce_set(
    items: &[TestItem],
    treebank: &[Sentence],
    res: NonceResources<'_>,
    n_variants: u32,
    seed: u64,
) -> Result<Vec<TestItem>, GenerateError> {
    use rayon::prelude::*;
    let by_id: HashMap<&str, &Sentence> = treebank.iter().map(|s| (s.sent_id.as_str(), s)).collect();
    let chunks: Result<Vec<Vec<TestItem>>, GenerateError> = items
        .par_iter()
        .filter(|i| i.kind == ItemKind::Original)
        .map(|item| {
            let sentence = by_id.get(item.source_sent_id.as_str()).ok_or_else(|| GenerateError::SentenceMismatch {
                item: item.item_id.clone(),
                sent_id: item.source_sent_id.clone(),
            })?;
            generate_nonce(item, sentence, res, n_variants, seed)
        })
        .collect();
    Ok(chunks?.into_iter().flatten().collect())
}

/// Filler items for a human experiment: random sentences cut before a
/// random Number-bearing content word, each followed by its nonce variants.
/// Sentences without such a word are never drawn.
pub fn generate_fillers(
    treebank: &[Sentence],
    res: NonceResources<'_>,
    n: usize,
    n_variants: u32,
    seed: u64,
) -> Result<Vec<TestItem>, GenerateError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let eligible: Vec<(&Sentence, Vec<usize>)> = treebank
        .iter()
        .filter_map(|s| {
            let slots: Vec<usize> = s
                .tokens
                .iter()
                .filter(|t| t.id >= 2 && is_content(&t.upos) && GramNumber::of(t).is_known())
                .filter(|t| {
                    res.vocab.contains(&t.form)
                        && res.counterparts.counterpart_of(t).is_some_and(|w| w != t.form && res.vocab.contains(w))
                })
                .map(|t| t.id)
                .collect();
            (!slots.is_empty()).then_some((s, slots))
        })
        .collect();
    if eligible.is_empty() {
        return Err(GenerateError::NoFillerCandidates);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for k in 0..n {
        let (sentence, slots) = &eligible[uniform_index(&mut rng, eligible.len())];
        let target = slots[uniform_index(&mut rng, slots.len())];
        let token = &sentence.tokens[target - 1];
        let wrong = res.counterparts.counterpart_of(token).expect("checked above");
        let item = TestItem {
            item_id: format!("filler-{}", k),
            construction_id: "filler".to_owned(),
            kind: ItemKind::Original,
            source_sent_id: sentence.sent_id.clone(),
            variant_index: 0,
            prefix: sentence.tokens[..target - 1].iter().map(|t| t.form.clone()).collect(),
            correct_form: token.form.clone(),
            wrong_form: wrong.to_owned(),
            cue_offset: None,
            n_attractors: 0,
            fallback_slots: None,
            filler: true,
        };
        let variants = generate_nonce(&item, sentence, res, n_variants, seed)?;
        out.push(item);
        out.extend(variants);
    }
    Ok(out)
}

//! Mining long-distance agreement constructions from a dependency treebank.
//!
//! A candidate is any dependency arc; the linearly first word is the *cue*
//! and the second the *target*, whichever of the two is the head. The
//! *context* of a candidate is the POS sequence of the intervening words
//! whose head lies outside the open cue..target interval (the roots of the
//! intervening subtrees). Candidates are grouped by the full POS pattern
//! `cue context.. target`; a group survives only if every instance with
//! Number annotated on both ends agrees, and at least `min_per_number`
//! singular and plural instances exist.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conllu::{Sentence, Token};
use crate::lexgen::CounterpartIndex;
use crate::ngram::Vocabulary;

/// Grammatical number of a word, as far as its FEATS tell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GramNumber {
    Sing,
    Plur,
    #[serde(rename = "unknown")]
    Unknown,
}

impl GramNumber {
    pub fn of(token: &Token) -> GramNumber {
        GramNumber::parse(token.feats.get("Number"))
    }

    pub fn parse(value: Option<&str>) -> GramNumber {
        match value {
            Some("Sing") => GramNumber::Sing,
            Some("Plur") => GramNumber::Plur,
            _ => GramNumber::Unknown,
        }
    }

    pub fn opposite(self) -> Option<GramNumber> {
        match self {
            GramNumber::Sing => Some(GramNumber::Plur),
            GramNumber::Plur => Some(GramNumber::Sing),
            GramNumber::Unknown => None,
        }
    }

    pub fn is_known(self) -> bool {
        self != GramNumber::Unknown
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GramNumber::Sing => "Sing",
            GramNumber::Plur => "Plur",
            GramNumber::Unknown => "unknown",
        }
    }
}

impl fmt::Display for GramNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A dependency arc with its ends ordered by surface position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Arc {
    pub cue: usize,
    pub target: usize,
    /// True when the cue governs the target.
    pub cue_is_head: bool,
}

impl Arc {
    pub fn intervening(&self) -> usize {
        self.target - self.cue - 1
    }
}

/// Every non-root arc of the sentence, in order of (cue, target).
pub fn extract_arcs(sentence: &Sentence) -> Vec<Arc> {
    let mut arcs: Vec<Arc> = sentence
        .tokens
        .iter()
        .filter(|t| t.head != 0)
        .map(|t| {
            let (cue, target) = if t.head < t.id { (t.head, t.id) } else { (t.id, t.head) };
            Arc { cue, target, cue_is_head: cue == t.head }
        })
        .collect();
    arcs.sort();
    arcs
}

/// Indices of the intervening tokens whose head is not strictly inside the
/// open interval (cue, target).
pub fn context_tops(sentence: &Sentence, cue: usize, target: usize) -> Vec<usize> {
    if target <= cue + 1 {
        return Vec::new();
    }
    ((cue + 1)..target)
        .filter(|&i| {
            let head = sentence.tokens[i - 1].head;
            !(head > cue && head < target)
        })
        .collect()
}

/// POS tags of [`context_tops`], in surface order.
pub fn context_of(sentence: &Sentence, cue: usize, target: usize) -> Vec<String> {
    context_tops(sentence, cue, target).into_iter().map(|i| sentence.tokens[i - 1].upos.clone()).collect()
}

/// Tokens strictly between cue and target with the cue's POS and the
/// opposite number.
pub fn count_attractors(
    sentence: &Sentence,
    cue: usize,
    target: usize,
    cue_pos: &str,
    cue_number: GramNumber,
) -> usize {
    let Some(opposite) = cue_number.opposite() else {
        return 0;
    };
    if target <= cue + 1 {
        return 0;
    }
    sentence.tokens[cue..target - 1].iter().filter(|t| t.upos == cue_pos && GramNumber::of(t) == opposite).count()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MiningConfig {
    pub min_context_tokens: usize,
    pub min_per_number: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig { min_context_tokens: 3, min_per_number: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Construction {
    /// The POS pattern joined by spaces, e.g. `NOUN VERB ADV VERB`.
    pub id: String,
    pub cue_pos: String,
    pub target_pos: String,
    pub context_pos: Vec<String>,
    pub instance_count_sing: usize,
    pub instance_count_plur: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub construction_id: String,
    pub sent_id: String,
    pub cue_index: usize,
    pub target_index: usize,
    pub cue_number: GramNumber,
    pub target_number: GramNumber,
    pub context_top_indices: Vec<usize>,
    pub cue_is_head: bool,
}

impl Instance {
    /// Both ends annotated and equal.
    pub fn agrees(&self) -> Option<bool> {
        if self.cue_number.is_known() && self.target_number.is_known() {
            Some(self.cue_number == self.target_number)
        } else {
            None
        }
    }
}

/// Retained constructions (sorted by id) and their instances.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Mined {
    pub constructions: Vec<Construction>,
    pub instances: Vec<Instance>,
}

pub fn pattern_id(cue_pos: &str, context: &[String], target_pos: &str) -> String {
    let mut parts = Vec::with_capacity(context.len() + 2);
    parts.push(cue_pos);
    parts.extend(context.iter().map(String::as_str));
    parts.push(target_pos);
    parts.join(" ")
}

/// All arcs of one sentence spanning at least `min_context_tokens`
/// intervening words, as instances keyed by their POS pattern.
pub fn candidate_instances(sentence: &Sentence, min_context_tokens: usize) -> Vec<(Construction, Instance)> {
    extract_arcs(sentence)
        .into_iter()
        .filter(|a| a.intervening() >= min_context_tokens.max(1))
        .map(|a| {
            let cue = &sentence.tokens[a.cue - 1];
            let target = &sentence.tokens[a.target - 1];
            let tops = context_tops(sentence, a.cue, a.target);
            let context_pos: Vec<String> = tops.iter().map(|&i| sentence.tokens[i - 1].upos.clone()).collect();
            let id = pattern_id(&cue.upos, &context_pos, &target.upos);
            let construction = Construction {
                id: id.clone(),
                cue_pos: cue.upos.clone(),
                target_pos: target.upos.clone(),
                context_pos,
                instance_count_sing: 0,
                instance_count_plur: 0,
            };
            let instance = Instance {
                construction_id: id,
                sent_id: sentence.sent_id.clone(),
                cue_index: a.cue,
                target_index: a.target,
                cue_number: GramNumber::of(cue),
                target_number: GramNumber::of(target),
                context_top_indices: tops,
                cue_is_head: a.cue_is_head,
            };
            (construction, instance)
        })
        .collect()
}

struct Group {
    construction: Construction,
    instances: Vec<Instance>,
    vetoed: bool,
}

pub fn mine_constructions(treebank: &[Sentence], config: MiningConfig) -> Mined {
    let candidates: Vec<Vec<(Construction, Instance)>> =
        treebank.par_iter().map(|s| candidate_instances(s, config.min_context_tokens)).collect();

    let mut groups: BTreeMap<String, Group> = BTreeMap::new();
    for (construction, instance) in candidates.into_iter().flatten() {
        let group = groups.entry(construction.id.clone()).or_insert_with(|| Group {
            construction,
            instances: Vec::new(),
            vetoed: false,
        });
        match instance.agrees() {
            Some(false) => group.vetoed = true,
            Some(true) => match instance.cue_number {
                GramNumber::Sing => group.construction.instance_count_sing += 1,
                GramNumber::Plur => group.construction.instance_count_plur += 1,
                GramNumber::Unknown => unreachable!(),
            },
            None => {}
        }
        group.instances.push(instance);
    }

    let mut mined = Mined::default();
    for (_, mut g) in groups {
        let c = &g.construction;
        if g.vetoed || c.instance_count_sing < config.min_per_number || c.instance_count_plur < config.min_per_number {
            continue;
        }
        g.instances
            .sort_by(|a, b| (&a.sent_id, a.cue_index, a.target_index).cmp(&(&b.sent_id, b.cue_index, b.target_index)));
        mined.instances.extend(g.instances);
        mined.constructions.push(g.construction);
    }
    mined
}

/// Original or nonce sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Original,
    Nonce,
}

impl ItemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ItemKind::Original => "original",
            ItemKind::Nonce => "nonce",
        }
    }
}

impl fmt::Display for ItemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One evaluation unit: a sentence prefix and the two target forms.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestItem {
    pub item_id: String,
    pub construction_id: String,
    pub kind: ItemKind,
    pub source_sent_id: String,
    /// 0 for originals, 1.. for nonce variants.
    pub variant_index: u32,
    /// Word forms up to and excluding the target.
    pub prefix: Vec<String>,
    pub correct_form: String,
    pub wrong_form: String,
    /// Position of the cue in `prefix`; `None` for fillers, which have no cue.
    pub cue_offset: Option<usize>,
    pub n_attractors: usize,
    /// Prefix positions (the target is `prefix.len()`) where no substitute
    /// was available. Present on nonce items only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_slots: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub filler: bool,
}

impl TestItem {
    /// 1-based sentence index of the target.
    pub fn target_index(&self) -> usize {
        self.prefix.len() + 1
    }
}

pub fn original_item_id(sent_id: &str, cue: usize, target: usize) -> String {
    format!("{}:{}-{}", sent_id, cue, target)
}

/// Builds the original-sentence test set. An instance qualifies when both
/// ends carry Number, every form from cue to target is in the vocabulary,
/// and the target's Number-flipped counterpart is known and in vocabulary.
pub fn extract_original_testset(
    treebank: &[Sentence],
    mined: &Mined,
    vocab: &Vocabulary,
    counterparts: &CounterpartIndex,
) -> Vec<TestItem> {
    let by_id: HashMap<&str, &Sentence> = treebank.iter().map(|s| (s.sent_id.as_str(), s)).collect();
    let mut items = Vec::new();
    for inst in &mined.instances {
        if inst.agrees() != Some(true) {
            continue;
        }
        let Some(sentence) = by_id.get(inst.sent_id.as_str()) else {
            continue;
        };
        let span = &sentence.tokens[inst.cue_index - 1..inst.target_index];
        if !span.iter().all(|t| vocab.contains(&t.form)) {
            continue;
        }
        let target = &sentence.tokens[inst.target_index - 1];
        let Some(wrong) = counterparts.counterpart_of(target) else {
            continue;
        };
        if wrong == target.form || !vocab.contains(wrong) {
            continue;
        }
        let cue = &sentence.tokens[inst.cue_index - 1];
        items.push(TestItem {
            item_id: original_item_id(&inst.sent_id, inst.cue_index, inst.target_index),
            construction_id: inst.construction_id.clone(),
            kind: ItemKind::Original,
            source_sent_id: inst.sent_id.clone(),
            variant_index: 0,
            prefix: sentence.tokens[..inst.target_index - 1].iter().map(|t| t.form.clone()).collect(),
            correct_form: target.form.clone(),
            wrong_form: wrong.to_owned(),
            cue_offset: Some(inst.cue_index - 1),
            n_attractors: count_attractors(sentence, inst.cue_index, inst.target_index, &cue.upos, inst.cue_number),
            fallback_slots: None,
            filler: false,
        });
    }
    items
}

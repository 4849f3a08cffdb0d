//! Aggregation of evaluation records, correlation statistics and the
//! analysis of human judgment files.
//!
//! Accuracy is computed per scorer first; cells then report the mean and the
//! population standard deviation (divide by n) across scorers.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::harness::EvalRecord;
use crate::lexgen::uniform_index;
use crate::miner::ItemKind;
use crate::num::Real;

pub mod report;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("zero variance")]
    ZeroVariance,
    #[error("judgments and records share no item ids")]
    NoOverlap,
    #[error("judgment file: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    Overall,
    Kind,
    Construction,
    Attractors,
}

impl Grouping {
    pub fn as_str(self) -> &'static str {
        match self {
            Grouping::Overall => "overall",
            Grouping::Kind => "kind",
            Grouping::Construction => "construction",
            Grouping::Attractors => "attractors",
        }
    }

    pub fn key(self, r: &EvalRecord) -> String {
        match self {
            Grouping::Overall => "all".to_owned(),
            Grouping::Kind => r.kind.as_str().to_owned(),
            Grouping::Construction => r.construction_id.clone(),
            Grouping::Attractors => attractor_bucket(r.n_attractors).to_owned(),
        }
    }
}

/// Attractor bucket label: `0`, `1`, `2` or `3+`.
pub fn attractor_bucket(n: usize) -> &'static str {
    match n {
        0 => "0",
        1 => "1",
        2 => "2",
        _ => "3+",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell<T> {
    pub key: String,
    pub mean: T,
    /// Population standard deviation across scorers.
    pub std: T,
    pub n_items: usize,
    pub n_scorers: usize,
}

/// Population mean and standard deviation.
pub fn mean_std<T: Real>(xs: &[T]) -> (T, T) {
    if xs.is_empty() {
        return (T::nan(), T::nan());
    }
    let n = T::of(xs.len() as f64);
    let mean = xs.iter().copied().sum::<T>() / n;
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

/// Per-group accuracy, averaged across record sets (one set per scorer).
/// Groups with no records are omitted. Ties count as incorrect.
pub fn accuracy_by<T: Real>(record_sets: &[&[EvalRecord]], grouping: Grouping) -> Vec<AccuracyCell<T>> {
    let mut per_group: BTreeMap<String, (Vec<T>, usize)> = BTreeMap::new();
    for records in record_sets {
        let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for r in records.iter() {
            let c = counts.entry(grouping.key(r)).or_default();
            c.1 += 1;
            if r.outcome.is_correct() {
                c.0 += 1;
            }
        }
        for (key, (correct, total)) in counts {
            let slot = per_group.entry(key).or_default();
            slot.0.push(T::of(correct as f64) / T::of(total as f64));
            slot.1 = slot.1.max(total);
        }
    }
    per_group
        .into_iter()
        .map(|(key, (accs, n_items))| {
            let (mean, std) = mean_std(&accs);
            AccuracyCell { key, mean, std, n_items, n_scorers: accs.len() }
        })
        .collect()
}

/// Product-moment correlation coefficient.
pub fn pearson<T: Real>(xs: &[T], ys: &[T]) -> Result<T, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(StatsError::TooShort(xs.len()));
    }
    let n = T::of(xs.len() as f64);
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(StatsError::ZeroVariance);
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}

/// 1-based ranks with ties given the average of the positions they span.
pub fn mid_ranks<T: Real>(xs: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![T::zero(); xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1
        let rank = T::of((i + j) as f64 / 2.0 + 1.0);
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Rank correlation: Pearson on mid-ranks.
pub fn spearman<T: Real>(xs: &[T], ys: &[T]) -> Result<T, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    pearson(&mid_ranks(xs), &mid_ranks(ys))
}

pub const DEFAULT_PERMUTATIONS: usize = 10_000;

/// Two-sided permutation p-value of a correlation statistic: `ys` is
/// shuffled (Fisher-Yates on a seeded ChaCha8 stream) `n_permutations`
/// times, and `p = (1 + #{|stat_perm| >= |stat_obs|}) / (1 + n_permutations)`.
pub fn permutation_p_value<T: Real>(
    xs: &[T],
    ys: &[T],
    stat: fn(&[T], &[T]) -> Result<T, StatsError>,
    n_permutations: usize,
    seed: u64,
) -> Result<T, StatsError> {
    let observed = stat(xs, ys)?.abs();
    // guard against float noise making equal statistics look smaller
    let tol = T::of(1e-12) * observed.max(T::one());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = ys.to_vec();
    let mut hits = 0usize;
    for _ in 0..n_permutations {
        for i in (1..shuffled.len()).rev() {
            let j = uniform_index(&mut rng, i + 1);
            shuffled.swap(i, j);
        }
        let s = match stat(xs, &shuffled) {
            Ok(s) => s.abs(),
            Err(StatsError::ZeroVariance) => T::zero(),
            Err(e) => return Err(e),
        };
        if s >= observed - tol {
            hits += 1;
        }
    }
    Ok(T::of((hits + 1) as f64) / T::of((n_permutations + 1) as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation<T> {
    pub coefficient: T,
    pub p_value: T,
    pub n: usize,
    pub permutations: usize,
}

pub fn pearson_test<T: Real>(
    xs: &[T],
    ys: &[T],
    n_permutations: usize,
    seed: u64,
) -> Result<Correlation<T>, StatsError> {
    Ok(Correlation {
        coefficient: pearson(xs, ys)?,
        p_value: permutation_p_value(xs, ys, pearson, n_permutations, seed)?,
        n: xs.len(),
        permutations: n_permutations,
    })
}

pub fn spearman_test<T: Real>(
    xs: &[T],
    ys: &[T],
    n_permutations: usize,
    seed: u64,
) -> Result<Correlation<T>, StatsError> {
    Ok(Correlation {
        coefficient: spearman(xs, ys)?,
        p_value: permutation_p_value(xs, ys, spearman, n_permutations, seed)?,
        n: xs.len(),
        permutations: n_permutations,
    })
}

fn bool_from_01<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(serde::de::Error::custom(format!("expected 0 or 1, got `{}`", other))),
    }
}

fn bool_to_01<S: Serializer>(b: &bool, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(if *b { "1" } else { "0" })
}

/// One row of a judgment file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub subject_id: String,
    pub item_id: String,
    #[serde(deserialize_with = "bool_from_01", serialize_with = "bool_to_01")]
    pub is_filler: bool,
    #[serde(deserialize_with = "bool_from_01", serialize_with = "bool_to_01")]
    pub chose_correct: bool,
}

/// Reads the CSV judgment file (`subject_id,item_id,is_filler,chose_correct`).
pub fn read_judgments<R: Read>(reader: R) -> Result<Vec<Judgment>, StatsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    Ok(rdr.deserialize().collect::<Result<Vec<Judgment>, _>>()?)
}

pub fn write_judgments<W: Write>(writer: W, rows: &[Judgment]) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SubjectFilter {
    pub kept: Vec<Judgment>,
    pub removed_subjects: Vec<String>,
    /// Subjects with no control-filler judgments; retained.
    pub unchecked_subjects: Vec<String>,
}

pub const MAX_FILLER_ERROR_RATE: f64 = 0.20;

/// Removes every row of a subject whose error rate on control fillers is
/// strictly above `max_error_rate`. Control fillers are filler rows whose
/// item is in `control`, or every filler row when `control` is `None`.
pub fn filter_subjects(
    judgments: &[Judgment],
    control: Option<&HashSet<String>>,
    max_error_rate: f64,
) -> SubjectFilter {
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for j in judgments {
        let slot = tally.entry(&j.subject_id).or_default();
        if j.is_filler && control.is_none_or(|c| c.contains(&j.item_id)) {
            slot.1 += 1;
            if !j.chose_correct {
                slot.0 += 1;
            }
        }
    }
    let mut out = SubjectFilter::default();
    let mut removed = HashSet::new();
    for (subject, (errors, total)) in tally {
        if total == 0 {
            out.unchecked_subjects.push(subject.to_owned());
        } else if errors as f64 > max_error_rate * total as f64 {
            out.removed_subjects.push(subject.to_owned());
            removed.insert(subject);
        }
    }
    out.kept = judgments.iter().filter(|j| !removed.contains(j.subject_id.as_str())).cloned().collect();
    out
}

/// Per-item share of correct choices, fillers excluded.
pub fn item_accuracies(judgments: &[Judgment]) -> BTreeMap<&str, (usize, usize)> {
    let mut per_item: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for j in judgments.iter().filter(|j| !j.is_filler) {
        let slot = per_item.entry(&j.item_id).or_default();
        slot.1 += 1;
        if j.chose_correct {
            slot.0 += 1;
        }
    }
    per_item
}

/// Accuracy computed within each item, then averaged (unweighted) across
/// the items of each group. `group_of` maps an item id to its group key;
/// items it maps to `None` are left out. The `std` field is the standard
/// deviation across items.
pub fn human_accuracy<T: Real>(
    judgments: &[Judgment],
    group_of: impl Fn(&str) -> Option<String>,
) -> Vec<AccuracyCell<T>> {
    let mut groups: BTreeMap<String, Vec<T>> = BTreeMap::new();
    for (item, (correct, total)) in item_accuracies(judgments) {
        if let Some(g) = group_of(item) {
            groups.entry(g).or_default().push(T::of(correct as f64) / T::of(total as f64));
        }
    }
    groups
        .into_iter()
        .map(|(key, accs)| {
            let (mean, std) = mean_std(&accs);
            AccuracyCell { key, mean, std, n_items: accs.len(), n_scorers: 1 }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlignmentRow<T> {
    pub item_id: String,
    pub kind: ItemKind,
    /// Correct minus incorrect human choices.
    pub human_margin: i64,
    /// Log-probability of the correct form minus the wrong one, averaged
    /// over record sets.
    pub model_margin: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Alignment<T> {
    pub rows: Vec<AlignmentRow<T>>,
    pub original: Option<Correlation<T>>,
    pub nonce: Option<Correlation<T>>,
}

/// Spearman correlation between human margins and model log-probability
/// margins, computed separately for original and nonce items. A kind with
/// fewer than two items or constant margins gets `None`.
pub fn human_model_alignment<T: Real>(
    judgments: &[Judgment],
    record_sets: &[&[EvalRecord]],
    n_permutations: usize,
    seed: u64,
) -> Result<Alignment<T>, StatsError> {
    let mut model: BTreeMap<&str, (ItemKind, Vec<T>)> = BTreeMap::new();
    for records in record_sets {
        for r in records.iter() {
            model
                .entry(&r.item_id)
                .or_insert_with(|| (r.kind, Vec::new()))
                .1
                .push(T::of(r.logprob_correct - r.logprob_wrong));
        }
    }
    let mut rows = Vec::new();
    for (item, (correct, total)) in item_accuracies(judgments) {
        if let Some((kind, margins)) = model.get(item) {
            rows.push(AlignmentRow {
                item_id: item.to_owned(),
                kind: *kind,
                human_margin: correct as i64 - (total - correct) as i64,
                model_margin: margins.iter().copied().sum::<T>() / T::of(margins.len() as f64),
            });
        }
    }
    if rows.is_empty() {
        return Err(StatsError::NoOverlap);
    }
    let corr = |kind: ItemKind| {
        let (xs, ys): (Vec<T>, Vec<T>) =
            rows.iter().filter(|r| r.kind == kind).map(|r| (T::of(r.human_margin as f64), r.model_margin)).unzip();
        spearman_test(&xs, &ys, n_permutations, seed).ok()
    };
    let original = corr(ItemKind::Original);
    let nonce = corr(ItemKind::Nonce);
    Ok(Alignment { rows, original, nonce })
}

/// Kind and attractor count of every item seen in any record set.
pub fn item_meta(record_sets: &[&[EvalRecord]]) -> HashMap<String, (ItemKind, usize, String)> {
    let mut meta = HashMap::new();
    for records in record_sets {
        for r in records.iter() {
            meta.entry(r.item_id.clone()).or_insert_with(|| (r.kind, r.n_attractors, r.construction_id.clone()));
        }
    }
    meta
}

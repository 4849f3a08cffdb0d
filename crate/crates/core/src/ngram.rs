//! Vocabulary, corpus filtering, the unigram baseline and an interpolated
//! modified Kneser-Ney n-gram model.
//!
//! Token ids: `0 = <unk>`, `1 = <s>`, `2 = </s>`, vocabulary words from 3 in
//! rank order. The model predicts words, `<unk>` and `</s>`; `<s>` only ever
//! appears in histories. The recursion bottoms out at the uniform
//! distribution over those predicted symbols.
//!
//! Counting: every sentence is padded with `order - 1` start symbols and one
//! end symbol; the highest order keeps raw counts and each lower order keeps
//! continuation counts (the number of distinct words seen to the left).
//! Discounts per order come from counts-of-counts `n1..n4` of that order's
//! counts:
//!
//! ```text
//! Y = n1 / (n1 + 2 n2)
//! D1 = 1 - 2Y n2/n1    D2 = 2 - 3Y n3/n2    D3+ = 3 - 4Y n4/n3
//! ```
//!
//! A zero denominator, or a value at or above its bucket `k`, falls back to
//! `0.5 k`; negative values are clamped to zero.

use std::collections::{HashMap, HashSet};
use std::io::{self, BufRead, Read, Write};

use thiserror::Error;

use crate::num::Real;

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
const FIRST_WORD_ID: u32 = 3;

pub fn is_reserved(word: &str) -> bool {
    word == UNK || word == BOS || word == EOS
}

#[derive(Debug, Error)]
pub enum NgramError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("n-gram order must be at least 1")]
    ZeroOrder,
    #[error("no predicted positions to evaluate")]
    NoPredictions,
    #[error("malformed model or table: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Word frequencies of a corpus.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: HashMap<String, u64>,
    total: u64,
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_sentences<I, S, W>(sentences: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = W>,
        W: AsRef<str>,
    {
        let mut t = FrequencyTable::new();
        for s in sentences {
            for w in s {
                t.add(w.as_ref(), 1);
            }
        }
        t
    }

    pub fn add(&mut self, word: &str, n: u64) {
        *self.counts.entry(word.to_owned()).or_default() += n;
        self.total += n;
    }

    pub fn get(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    /// Entries by descending count, ties lexicographic.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<(&str, u64)> = self.counts.iter().map(|(w, &c)| (w.as_str(), c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }

    /// `word<TAB>count` lines; a line with only a word counts as zero.
    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self, NgramError> {
        let mut t = FrequencyTable::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (word, count) = match line.split_once('\t') {
                Some((w, c)) => (
                    w,
                    c.trim()
                        .parse::<u64>()
                        .map_err(|_| NgramError::Format(format!("line {}: bad count `{}`", i + 1, c)))?,
                ),
                None => (line.trim(), 0),
            };
            t.add(word, count);
        }
        Ok(t)
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (word, c) in self.ranked() {
            writeln!(w, "{}\t{}", word, c)?;
        }
        Ok(())
    }
}

/// The unigram baseline: the more frequent of two forms, ties (including
/// two unseen forms) going to the lexicographically smaller one.
pub fn unigram_choose<'a>(freq: &FrequencyTable, form_a: &'a str, form_b: &'a str) -> &'a str {
    let (ca, cb) = (freq.get(form_a), freq.get(form_b));
    match ca.cmp(&cb) {
        std::cmp::Ordering::Greater => form_a,
        std::cmp::Ordering::Less => form_b,
        std::cmp::Ordering::Equal => form_a.min(form_b),
    }
}

/// Ranked word list; reserved symbols are implicit and not part of the budget.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<(String, u64)>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Takes the first `size` entries of an already ranked list.
    pub fn from_ranked<I: IntoIterator<Item = (String, u64)>>(ranked: I, size: usize) -> Self {
        let mut words = Vec::new();
        let mut index = HashMap::new();
        for (w, c) in ranked {
            if words.len() == size {
                break;
            }
            if is_reserved(&w) || index.contains_key(&w) {
                continue;
            }
            index.insert(w.clone(), FIRST_WORD_ID + words.len() as u32);
            words.push((w, c));
        }
        Vocabulary { words, index }
    }

    pub fn from_frequencies(freq: &FrequencyTable, size: usize) -> Self {
        Self::from_ranked(freq.ranked().into_iter().map(|(w, c)| (w.to_owned(), c)), size)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// Id of a word, `<unk>` for anything outside the vocabulary.
    pub fn id(&self, word: &str) -> u32 {
        match word {
            BOS => BOS_ID,
            EOS => EOS_ID,
            _ => self.index.get(word).copied().unwrap_or(UNK_ID),
        }
    }

    pub fn word(&self, id: u32) -> &str {
        match id {
            UNK_ID => UNK,
            BOS_ID => BOS,
            EOS_ID => EOS,
            _ => &self.words[(id - FIRST_WORD_ID) as usize].0,
        }
    }

    /// Number of ordinary words.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Size of the predicted symbol set: words, `<unk>` and `</s>`.
    pub fn support_size(&self) -> usize {
        self.words.len() + 2
    }

    /// Ids of every predicted symbol.
    pub fn support(&self) -> impl Iterator<Item = u32> + '_ {
        [UNK_ID, EOS_ID].into_iter().chain((0..self.words.len() as u32).map(|i| i + FIRST_WORD_ID))
    }

    pub fn words(&self) -> impl Iterator<Item = (&str, u64)> {
        self.words.iter().map(|(w, c)| (w.as_str(), *c))
    }

    /// Reads `word<TAB>count` or bare `word` lines, in rank order.
    pub fn read<R: BufRead>(reader: R) -> Result<Self, NgramError> {
        let mut ranked = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let (w, c) = match line.split_once('\t') {
                Some((w, c)) => (
                    w,
                    c.trim()
                        .parse::<u64>()
                        .map_err(|_| NgramError::Format(format!("line {}: bad count `{}`", i + 1, c)))?,
                ),
                None => (line, 0),
            };
            ranked.push((w.to_owned(), c));
        }
        Ok(Self::from_ranked(ranked, usize::MAX))
    }

    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (word, c) in &self.words {
            writeln!(w, "{}\t{}", word, c)?;
        }
        Ok(())
    }
}

/// The `size` most frequent words of a tokenized corpus.
pub fn build_vocab<I, S, W>(sentences: I, size: usize) -> Vocabulary
where
    I: IntoIterator<Item = S>,
    S: IntoIterator<Item = W>,
    W: AsRef<str>,
{
    Vocabulary::from_frequencies(&FrequencyTable::from_sentences(sentences), size)
}

/// Fraction of tokens absent from `known`; 0 for an empty sentence.
pub fn unknown_ratio<S: AsRef<str>>(tokens: &[S], known: &HashSet<String>) -> f64 {
    if tokens.is_empty() {
        return 0.0;
    }
    let unknown = tokens.iter().filter(|t| !known.contains(t.as_ref())).count();
    unknown as f64 / tokens.len() as f64
}

/// Drops sentences whose unknown-token ratio is strictly above `max_unknown_ratio`.
pub fn filter_corpus<'a, I, S>(
    sentences: I,
    known: &'a HashSet<String>,
    max_unknown_ratio: f64,
) -> impl Iterator<Item = Vec<S>> + 'a
where
    I: IntoIterator<Item = Vec<S>>,
    I::IntoIter: 'a,
    S: AsRef<str>,
{
    sentences.into_iter().filter(move |s| unknown_ratio(s, known) <= max_unknown_ratio)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct HistStats {
    total: u64,
    n1: u64,
    n2: u64,
    n3p: u64,
}

/// Discount triple (D1, D2, D3+) from counts-of-counts `[n1, n2, n3, n4]`.
pub fn discounts_from_counts_of_counts(n: [u64; 4]) -> [f64; 3] {
    let fallback = |k: usize| 0.5 * k as f64;
    if n[0] == 0 {
        return [fallback(1), fallback(2), fallback(3)];
    }
    let (n1, n2) = (n[0] as f64, n[1] as f64);
    let y = n1 / (n1 + 2.0 * n2);
    let mut d = [0.0; 3];
    for k in 1..=3 {
        let denom = n[k - 1];
        d[k - 1] = if denom == 0 {
            fallback(k)
        } else {
            let v = k as f64 - (k as f64 + 1.0) * y * n[k] as f64 / denom as f64;
            if v < 0.0 {
                0.0
            } else if v >= k as f64 {
                fallback(k)
            } else {
                v
            }
        };
    }
    d
}

const MAGIC: &[u8; 8] = b"AGBKN\0\0\0";
const FORMAT_VERSION: u32 = 1;

/// Interpolated modified Kneser-Ney model, generic over the probability scalar.
#[derive(Clone, Debug)]
pub struct KnModel<T> {
    order: usize,
    vocab: Vocabulary,
    /// Index `n - 1`: n-grams of order n. Raw counts at the top order,
    /// continuation counts below.
    counts: Vec<HashMap<Vec<u32>, u64>>,
    /// Index `n - 1`: per-history totals and bucket sizes at order n.
    hist: Vec<HashMap<Vec<u32>, HistStats>>,
    counts_of_counts: Vec<[u64; 4]>,
    discounts: Vec<[T; 3]>,
    uniform: T,
    /// Validation perplexity recorded at training time, if any.
    pub valid_perplexity: Option<f64>,
}

impl<T: Real> KnModel<T> {
    pub const VARIANT: &'static str = "interpolated-modified-kneser-ney";

    /// A model without counts: every probability is uniform.
    pub fn uniform(vocab: Vocabulary, order: usize) -> Result<Self, NgramError> {
        Self::from_top_counts(vocab, order, HashMap::new())
    }

    /// Builds every derived table from highest-order counts.
    pub fn from_top_counts(vocab: Vocabulary, order: usize, top: HashMap<Vec<u32>, u64>) -> Result<Self, NgramError> {
        if order == 0 {
            return Err(NgramError::ZeroOrder);
        }
        if top.keys().any(|k| k.len() != order) {
            return Err(NgramError::Format("n-gram length differs from model order".into()));
        }
        let mut counts = vec![HashMap::new(); order];
        counts[order - 1] = top;
        for n in (1..order).rev() {
            let mut lower: HashMap<Vec<u32>, u64> = HashMap::new();
            for gram in counts[n].keys() {
                *lower.entry(gram[1..].to_vec()).or_default() += 1;
            }
            counts[n - 1] = lower;
        }

        let mut hist = Vec::with_capacity(order);
        let mut counts_of_counts = Vec::with_capacity(order);
        let mut discounts = Vec::with_capacity(order);
        for table in &counts {
            let mut coc = [0u64; 4];
            let mut stats: HashMap<Vec<u32>, HistStats> = HashMap::new();
            for (gram, &c) in table {
                if (1..=4).contains(&c) {
                    coc[c as usize - 1] += 1;
                }
                let s = stats.entry(gram[..gram.len() - 1].to_vec()).or_default();
                s.total += c;
                match c {
                    1 => s.n1 += 1,
                    2 => s.n2 += 1,
                    _ => s.n3p += 1,
                }
            }
            let d = discounts_from_counts_of_counts(coc);
            discounts.push([T::of(d[0]), T::of(d[1]), T::of(d[2])]);
            counts_of_counts.push(coc);
            hist.push(stats);
        }
        let uniform = T::one() / T::of(vocab.support_size() as f64);
        Ok(KnModel { order, vocab, counts, hist, counts_of_counts, discounts, uniform, valid_perplexity: None })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Discounts (D1, D2, D3+) of order `n` (1-based).
    pub fn discounts(&self, n: usize) -> [T; 3] {
        self.discounts[n - 1]
    }

    /// Overrides the discounts of order `n`.
    pub fn set_discounts(&mut self, n: usize, d: [T; 3]) {
        self.discounts[n - 1] = d;
    }

    pub fn counts_of_counts(&self, n: usize) -> [u64; 4] {
        self.counts_of_counts[n - 1]
    }

    /// Stored count of an n-gram of ids (continuation count below the top order).
    pub fn count(&self, gram: &[u32]) -> u64 {
        if gram.is_empty() || gram.len() > self.order {
            return 0;
        }
        self.counts[gram.len() - 1].get(gram).copied().unwrap_or(0)
    }

    /// Number of distinct stored n-grams of order `n`.
    pub fn ngram_count(&self, n: usize) -> usize {
        self.counts[n - 1].len()
    }

    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Vec<u32> {
        words.iter().map(|w| self.vocab.id(w.as_ref())).collect()
    }

    /// P(word | history) over ids; only the last `order - 1` history ids matter.
    pub fn prob_ids(&self, history: &[u32], word: u32) -> T {
        let history = &history[history.len().saturating_sub(self.order - 1)..];
        let mut p = self.uniform;
        let mut key: Vec<u32> = Vec::with_capacity(self.order);
        for n in 1..=self.order {
            let hlen = n - 1;
            if hlen > history.len() {
                break;
            }
            let h = &history[history.len() - hlen..];
            let Some(stats) = self.hist[n - 1].get(h) else {
                continue;
            };
            key.clear();
            key.extend_from_slice(h);
            key.push(word);
            let c = self.counts[n - 1].get(key.as_slice()).copied().unwrap_or(0);
            let [d1, d2, d3] = self.discounts[n - 1];
            let total = T::of(stats.total as f64);
            let discounted = match c {
                0 => T::zero(),
                1 => T::one() - d1,
                2 => T::of(2.0) - d2,
                _ => T::of(c as f64) - d3,
            }
            .max(T::zero());
            let gamma =
                (d1 * T::of(stats.n1 as f64) + d2 * T::of(stats.n2 as f64) + d3 * T::of(stats.n3p as f64)) / total;
            p = discounted / total + gamma * p;
        }
        p
    }

    pub fn logprob_ids(&self, history: &[u32], word: u32) -> T {
        self.prob_ids(history, word).ln()
    }

    /// Writes the versioned binary format (see the crate README). Only the
    /// highest-order counts are stored; everything else is derived on load.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.order as u32).to_le_bytes())?;
        w.write_all(&self.valid_perplexity.unwrap_or(f64::NAN).to_le_bytes())?;
        w.write_all(&(self.vocab.len() as u64).to_le_bytes())?;
        for (word, c) in self.vocab.words() {
            w.write_all(&(word.len() as u32).to_le_bytes())?;
            w.write_all(word.as_bytes())?;
            w.write_all(&c.to_le_bytes())?;
        }
        let mut top: Vec<(&Vec<u32>, &u64)> = self.counts[self.order - 1].iter().collect();
        top.sort();
        w.write_all(&(top.len() as u64).to_le_bytes())?;
        for (gram, c) in top {
            for id in gram {
                w.write_all(&id.to_le_bytes())?;
            }
            w.write_all(&c.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, NgramError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NgramError::Format("not an n-gram model file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(NgramError::Format(format!("unsupported model format version {}", version)));
        }
        let order = read_u32(&mut r)? as usize;
        let ppl = f64::from_le_bytes(read_array(&mut r)?);
        let n_words = read_u64(&mut r)?;
        let mut ranked = Vec::new();
        for _ in 0..n_words {
            let len = read_u32(&mut r)? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            let word = String::from_utf8(buf).map_err(|_| NgramError::Format("word is not UTF-8".into()))?;
            ranked.push((word, read_u64(&mut r)?));
        }
        let vocab = Vocabulary::from_ranked(ranked, usize::MAX);
        if vocab.len() as u64 != n_words {
            return Err(NgramError::Format("duplicate or reserved word in vocabulary".into()));
        }
        let n_grams = read_u64(&mut r)?;
        let max_id = FIRST_WORD_ID as u64 + n_words;
        let mut top = HashMap::new();
        for _ in 0..n_grams {
            let mut gram = Vec::with_capacity(order);
            for _ in 0..order {
                let id = read_u32(&mut r)?;
                if id as u64 >= max_id {
                    return Err(NgramError::Format(format!("token id {} out of range", id)));
                }
                gram.push(id);
            }
            top.insert(gram, read_u64(&mut r)?);
        }
        let mut model = Self::from_top_counts(vocab, order, top)?;
        model.valid_perplexity = (!ppl.is_nan()).then_some(ppl);
        Ok(model)
    }

    /// Plain-text dump of every order's counts, sorted, for auditing.
    pub fn write_counts_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# {} order={} support={}", Self::VARIANT, self.order, self.vocab.support_size())?;
        for n in 1..=self.order {
            let kind = if n == self.order { "raw" } else { "continuation" };
            let [d1, d2, d3] = self.discounts[n - 1];
            writeln!(
                w,
                "\\{}-grams: {} ({} counts) D1={} D2={} D3+={}",
                n,
                self.counts[n - 1].len(),
                kind,
                d1,
                d2,
                d3
            )?;
            let mut lines: Vec<(String, u64)> = self.counts[n - 1]
                .iter()
                .map(|(g, &c)| (g.iter().map(|&id| self.vocab.word(id)).collect::<Vec<_>>().join(" "), c))
                .collect();
            lines.sort();
            for (g, c) in lines {
                writeln!(w, "{}\t{}", g, c)?;
            }
        }
        Ok(())
    }
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn padded(order: usize, ids: impl IntoIterator<Item = u32>) -> Vec<u32> {
    let mut v = vec![BOS_ID; order - 1];
    v.extend(ids);
    v.push(EOS_ID);
    v
}

/// Counts a tokenized corpus (out-of-vocabulary words become `<unk>`) and
/// builds the model.
pub fn train_kn<T, I, S, W>(sentences: I, vocab: Vocabulary, order: usize) -> Result<KnModel<T>, NgramError>
where
    T: Real,
    I: IntoIterator<Item = S>,
    S: IntoIterator<Item = W>,
    W: AsRef<str>,
{
    if order == 0 {
        return Err(NgramError::ZeroOrder);
    }
    let mut top: HashMap<Vec<u32>, u64> = HashMap::new();
    let mut n_sentences = 0usize;
    for s in sentences {
        n_sentences += 1;
        let ids = padded(order, s.into_iter().map(|w| vocab.id(w.as_ref())));
        for gram in ids.windows(order) {
            *top.entry(gram.to_vec()).or_default() += 1;
        }
    }
    if n_sentences == 0 {
        return Err(NgramError::EmptyCorpus);
    }
    KnModel::from_top_counts(vocab, order, top)
}

/// Natural-log probability of `word` after `history`; unknown words map to `<unk>`.
pub fn kn_logprob<T: Real, S: AsRef<str>>(model: &KnModel<T>, history: &[S], word: &str) -> T {
    let h = model.encode(history);
    model.logprob_ids(&h, model.vocab.id(word))
}

/// `exp(-mean log P)` over every predicted position (words and `</s>`,
/// never `<s>`). With `exclude_unknown`, positions whose target is
/// `<unk>` are left out of both the sum and the count; unknown words still
/// condition later predictions.
pub fn perplexity<T, I, S, W>(model: &KnModel<T>, sentences: I, exclude_unknown: bool) -> Result<T, NgramError>
where
    T: Real,
    I: IntoIterator<Item = S>,
    S: IntoIterator<Item = W>,
    W: AsRef<str>,
{
    let order = model.order;
    let mut sum = T::zero();
    let mut n = 0u64;
    for s in sentences {
        let ids = padded(order, s.into_iter().map(|w| model.vocab.id(w.as_ref())));
        for i in (order - 1)..ids.len() {
            if exclude_unknown && ids[i] == UNK_ID {
                continue;
            }
            sum = sum + model.logprob_ids(&ids[i + 1 - order..i], ids[i]);
            n += 1;
        }
    }
    if n == 0 {
        return Err(NgramError::NoPredictions);
    }
    Ok((-sum / T::of(n as f64)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(text: &str) -> Vec<Vec<String>> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split_whitespace().map(str::to_owned).collect())
            .collect()
    }

    #[test]
    fn vocab_ranking_and_ties() {
        let c = corpus("b a c\na b\nd");
        let v = build_vocab(&c, 50_000);
        let words: Vec<_> = v.words().collect();
        assert_eq!(words, vec![("a", 2), ("b", 2), ("c", 1), ("d", 1)]);
        let v = build_vocab(&c, 3);
        assert!(v.contains("c") && !v.contains("d"));
        assert!(build_vocab(Vec::<Vec<String>>::new(), 10).is_empty());
        assert_eq!(v.id("zzz"), UNK_ID);
        assert_eq!(v.word(v.id("a")), "a");
    }

    #[test]
    fn reserved_symbols_outside_budget() {
        let c = corpus("<unk> a <unk> </s>");
        let v = build_vocab(&c, 1);
        assert_eq!(v.words().collect::<Vec<_>>(), vec![("a", 1)]);
        assert_eq!(v.support_size(), 3);
    }

    #[test]
    fn filter_boundaries() {
        let known: HashSet<String> = (0..19).map(|i| format!("w{i}")).collect();
        let mut one_unknown: Vec<String> = (0..19).map(|i| format!("w{i}")).collect();
        one_unknown.push("x".into());
        let mut two_unknown = one_unknown.clone();
        two_unknown[0] = "y".into();
        let kept: Vec<_> = filter_corpus(vec![one_unknown.clone(), two_unknown.clone()], &known, 0.05).collect();
        assert_eq!(kept, vec![one_unknown.clone()]);
        let kept: Vec<_> = filter_corpus(vec![one_unknown, two_unknown], &known, 0.0).collect();
        assert!(kept.is_empty());
    }

    #[test]
    fn unigram_choice() {
        let mut f = FrequencyTable::new();
        f.add("dogs", 500);
        f.add("dog", 900);
        assert_eq!(unigram_choose(&f, "dogs", "dog"), "dog");
        f.add("cats", 900);
        assert_eq!(unigram_choose(&f, "dog", "cats"), "cats");
        assert_eq!(unigram_choose(&f, "zz", "yy"), "yy");
    }

    #[test]
    fn discounts_and_fallbacks() {
        // n1=4 n2=2 n3=1 n4=1: Y = 4/8 = 0.5
        let d = discounts_from_counts_of_counts([4, 2, 1, 1]);
        assert!((d[0] - (1.0 - 2.0 * 0.5 * 2.0 / 4.0)).abs() < 1e-15);
        assert!((d[1] - (2.0 - 3.0 * 0.5 * 1.0 / 2.0)).abs() < 1e-15);
        assert!((d[2] - (3.0 - 4.0 * 0.5 * 1.0 / 1.0)).abs() < 1e-15);
        assert_eq!(discounts_from_counts_of_counts([0, 0, 0, 0]), [0.5, 1.0, 1.5]);
        // n2 = 0: D1 would equal 1, D2 and D3 have zero denominators
        assert_eq!(discounts_from_counts_of_counts([5, 0, 0, 0]), [0.5, 1.0, 1.5]);
        // large n3 drives D2 negative
        let d = discounts_from_counts_of_counts([2, 1, 50, 1]);
        assert_eq!(d[1], 0.0);
    }

    #[test]
    fn unseen_history_is_uniform_and_truncation() {
        let c = corpus("a b c\na b d\nb c a");
        let v = build_vocab(&c, 100);
        let m: KnModel<f64> = train_kn(&c, v, 3).unwrap();
        // an empty model is uniform everywhere
        let u: KnModel<f64> = KnModel::uniform(m.vocab().clone(), 3).unwrap();
        let p = kn_logprob(&u, &["a", "b"], "c").exp();
        assert!((p - 1.0 / 6.0).abs() < 1e-15);
        let long = kn_logprob(&m, &["x", "y", "c", "a", "b"], "c");
        let short = kn_logprob(&m, &["a", "b"], "c");
        assert_eq!(long, short);
        assert!(long < 0.0 && long.is_finite());
    }

    #[test]
    fn empty_corpus_errors() {
        let r: Result<KnModel<f64>, _> = train_kn(Vec::<Vec<String>>::new(), Vocabulary::default(), 5);
        assert!(matches!(r, Err(NgramError::EmptyCorpus)));
    }

    #[test]
    fn uniform_model_perplexity_is_support_size() {
        let c = corpus("a b c\nd e");
        let v = build_vocab(&c, 100);
        let u: KnModel<f64> = KnModel::uniform(v, 5).unwrap();
        let ppl = perplexity(&u, &c, true).unwrap();
        assert!((ppl - 7.0).abs() < 1e-12);
    }

    #[test]
    fn memorized_sentence_has_low_perplexity() {
        let c: Vec<Vec<String>> = (0..200).map(|_| corpus("the cat sat on the mat").remove(0)).collect();
        let v = build_vocab(&c, 100);
        let m: KnModel<f64> = train_kn(&c, v, 5).unwrap();
        let ppl = perplexity(&m, &c[..1], true).unwrap();
        assert!(ppl > 1.0 && ppl < 1.1, "{ppl}");
    }

    #[test]
    fn binary_round_trip() {
        let c = corpus("a b c\na b d\nb c a e");
        let v = build_vocab(&c, 100);
        let mut m: KnModel<f64> = train_kn(&c, v, 3).unwrap();
        m.valid_perplexity = Some(12.5);
        let mut buf = Vec::new();
        m.write_binary(&mut buf).unwrap();
        let back: KnModel<f64> = KnModel::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.valid_perplexity, Some(12.5));
        for h in [vec![], vec!["a"], vec!["a", "b"], vec!["q", "c"]] {
            for w in ["a", "b", "c", "d", "e", "zz", EOS] {
                assert_eq!(kn_logprob(&m, &h, w), kn_logprob(&back, &h, w));
            }
        }
        let mut again = Vec::new();
        back.write_binary(&mut again).unwrap();
        assert_eq!(buf, again);
        assert!(KnModel::<f64>::read_binary(&b"garbage!"[..]).is_err());
    }

    #[test]
    fn counts_text_dump_lists_every_order() {
        let c = corpus("a b");
        let m: KnModel<f64> = train_kn(&c, build_vocab(&c, 10), 2).unwrap();
        let mut out = Vec::new();
        m.write_counts_text(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("\\1-grams: 3 (continuation counts)"));
        assert!(text.contains("\\2-grams: 3 (raw counts)"));
        assert!(text.contains("<s> a\t1"));
    }
}

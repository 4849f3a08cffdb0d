//! Brute-force interpolated modified Kneser-Ney over string n-grams,
//! evaluated by direct recursion. Shares no code with the library.

use std::cell::RefCell;
use std::collections::{HashMap, HashSet};
use std::rc::Rc;

pub struct Oracle {
    order: usize,
    known: HashSet<String>,
    /// Predictable symbols: vocabulary words, `<unk>`, `</s>`.
    support: Vec<String>,
    /// `tables[n - 1]`: n-gram -> raw count at the top order, continuation
    /// count (distinct left neighbours) below.
    tables: Vec<HashMap<Vec<String>, u64>>,
    discounts: Vec<[f64; 3]>,
    /// Full distributions already computed, by history.
    memo: RefCell<HashMap<Vec<String>, Rc<Vec<f64>>>>,
}

fn discount_triple(n: [u64; 4]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for k in 1..=3usize {
        let kf = k as f64;
        let (nk, nk1) = (n[k - 1] as f64, n[k] as f64);
        out[k - 1] = if n[0] == 0 || n[k - 1] == 0 {
            0.5 * kf
        } else {
            let y = n[0] as f64 / (n[0] as f64 + 2.0 * n[1] as f64);
            let d = kf - (kf + 1.0) * y * nk1 / nk;
            if d >= kf {
                0.5 * kf
            } else {
                d.max(0.0)
            }
        };
    }
    out
}

impl Oracle {
    pub fn new(sentences: &[Vec<String>], vocab: &[String], order: usize) -> Oracle {
        let known: HashSet<String> = vocab.iter().cloned().collect();
        let mut support: Vec<String> = vocab.to_vec();
        support.push("<unk>".into());
        support.push("</s>".into());
        let mut alphabet = support.clone();
        alphabet.push("<s>".into());

        let mut top: HashMap<Vec<String>, u64> = HashMap::new();
        for s in sentences {
            let mut padded: Vec<String> = vec!["<s>".to_string(); order - 1];
            for w in s {
                padded.push(if known.contains(w) { w.clone() } else { "<unk>".into() });
            }
            padded.push("</s>".into());
            for i in 0..=padded.len() - order {
                *top.entry(padded[i..i + order].to_vec()).or_insert(0) += 1;
            }
        }

        let mut tables = vec![top];
        for _ in 1..order {
            let higher = tables.last().unwrap();
            let suffixes: HashSet<Vec<String>> = higher.keys().map(|g| g[1..].to_vec()).collect();
            let mut table = HashMap::new();
            for g in suffixes {
                let mut distinct = 0;
                for x in &alphabet {
                    let mut ext = vec![x.clone()];
                    ext.extend(g.iter().cloned());
                    if higher.get(&ext).copied().unwrap_or(0) > 0 {
                        distinct += 1;
                    }
                }
                table.insert(g, distinct);
            }
            tables.push(table);
        }
        tables.reverse();

        let discounts = tables
            .iter()
            .map(|t| {
                let mut n = [0u64; 4];
                for &c in t.values() {
                    if (1..=4).contains(&c) {
                        n[c as usize - 1] += 1;
                    }
                }
                discount_triple(n)
            })
            .collect();
        Oracle { order, known, support, tables, discounts, memo: RefCell::default() }
    }

    pub fn discounts(&self, n: usize) -> [f64; 3] {
        self.discounts[n - 1]
    }

    pub fn support(&self) -> &[String] {
        &self.support
    }

    fn count(&self, h: &[String], w: &str) -> u64 {
        let mut g = h.to_vec();
        g.push(w.to_owned());
        self.tables[h.len()].get(&g).copied().unwrap_or(0)
    }

    /// The distribution over the support after history `h`, recursing on
    /// the history with its first symbol dropped.
    fn distribution(&self, h: &[String]) -> Rc<Vec<f64>> {
        if let Some(d) = self.memo.borrow().get(h) {
            return d.clone();
        }
        let lower: Rc<Vec<f64>> = if h.is_empty() {
            Rc::new(vec![1.0 / self.support.len() as f64; self.support.len()])
        } else {
            self.distribution(&h[1..])
        };
        let counts: Vec<u64> = self.support.iter().map(|v| self.count(h, v)).collect();
        let total: u64 = counts.iter().sum();
        let dist = if total == 0 {
            lower
        } else {
            let [d1, d2, d3] = self.discounts[h.len()];
            let d_of = |c: u64| match c {
                0 => 0.0,
                1 => d1,
                2 => d2,
                _ => d3,
            };
            let total = total as f64;
            let gamma = counts.iter().map(|&c| d_of(c)).sum::<f64>() / total;
            Rc::new(
                counts
                    .iter()
                    .zip(lower.iter())
                    .map(|(&c, &p)| (c as f64 - d_of(c)).max(0.0) / total + gamma * p)
                    .collect(),
            )
        };
        self.memo.borrow_mut().insert(h.to_vec(), dist.clone());
        dist
    }

    /// P(word | history); unknown symbols become `<unk>`, `<s>` is kept.
    pub fn prob(&self, history: &[String], word: &str) -> f64 {
        let map = |w: &String| {
            if w == "<s>" || self.known.contains(w) {
                w.clone()
            } else {
                "<unk>".to_owned()
            }
        };
        let h: Vec<String> = history.iter().map(map).collect();
        let h = &h[h.len().saturating_sub(self.order - 1)..];
        let w = if word == "</s>" { word.to_owned() } else { map(&word.to_owned()) };
        let i = self.support.iter().position(|s| *s == w).expect("symbol in support");
        self.distribution(h)[i]
    }
}

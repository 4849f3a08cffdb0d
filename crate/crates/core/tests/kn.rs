mod common;

use std::collections::HashMap;
use std::time::Instant;

use agreebench_core::ngram::{build_vocab, kn_logprob, perplexity, train_kn, KnModel, Vocabulary, BOS, EOS};
use agreebench_core::KnModelF64;
use common::kn_oracle::Oracle;
use common::{sentences, CORPORA};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 30 tokens, 14 distinct words; a 12-word vocabulary leaves two unknown.
const ORACLE_CORPUS: &str = "a b c d a b\n\
                             c a b e f\n\
                             g a b c h i\n\
                             a b c j k\n\
                             b a l m d c a b\n";

fn ranked_words(corpus: &[Vec<String>], size: usize) -> Vec<String> {
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for s in corpus {
        for w in s {
            *freq.entry(w).or_default() += 1;
        }
    }
    let mut v: Vec<(&str, u64)> = freq.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    v.into_iter().take(size).map(|(w, _)| w.to_owned()).collect()
}

fn all_histories(alphabet: &[String], max_len: usize) -> Vec<Vec<String>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for h in &frontier {
            for a in alphabet {
                let mut g: Vec<String> = h.clone();
                g.push(a.clone());
                next.push(g);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[test]
fn oracle_equivalence_on_every_pair() {
    let corpus = sentences(ORACLE_CORPUS);
    assert_eq!(corpus.iter().map(Vec::len).sum::<usize>(), 30);
    let words = ranked_words(&corpus, 12);
    let vocab = build_vocab(&corpus, 12);
    assert_eq!(vocab.len(), 12);
    assert_eq!(vocab.words().map(|(w, _)| w.to_owned()).collect::<Vec<_>>(), words);

    let start = Instant::now();
    let model: KnModelF64 = train_kn(&corpus, vocab, 5).unwrap();
    let oracle = Oracle::new(&corpus, &words, 5);
    for n in 1..=5 {
        let lib = model.discounts(n);
        let ora = oracle.discounts(n);
        for k in 0..3 {
            assert!((lib[k] - ora[k]).abs() < 1e-12, "order {} discount {}: {} vs {}", n, k, lib[k], ora[k]);
        }
    }

    // `m` is outside the vocabulary, `zz` outside the corpus.
    let mut alphabet = words.clone();
    alphabet.push("m".into());
    alphabet.push(BOS.into());
    let mut targets = words.clone();
    targets.push("zz".into());
    targets.push(EOS.into());

    let mut pairs = 0usize;
    let mut worst = 0.0f64;
    for h in all_histories(&alphabet, 4) {
        for w in &targets {
            let lib = kn_logprob(&model, &h, w);
            let ora = oracle.prob(&h, w).ln();
            let diff = (lib - ora).abs();
            worst = worst.max(diff);
            assert!(diff <= 1e-9, "P({} | {:?}): {} vs {}", w, h, lib, ora);
            pairs += 1;
        }
    }
    assert!(pairs > 500_000);
    eprintln!("{} pairs, max |diff| {:e}, {:?}", pairs, worst, start.elapsed());
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

fn random_history(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> Vec<String> {
    let mut alphabet: Vec<String> = vocab.words().map(|(w, _)| w.to_owned()).collect();
    alphabet.push("oov-word".into());
    alphabet.push(BOS.into());
    let len = rng.gen_range(0..=6);
    (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())].clone()).collect()
}

#[test]
fn normalization_over_random_histories() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for text in CORPORA {
        let corpus = sentences(text);
        assert!(corpus.iter().map(Vec::len).sum::<usize>() <= 200);
        let distinct = build_vocab(&corpus, usize::MAX).len();
        for size in [distinct, distinct - 2] {
            let model: KnModelF64 = train_kn(&corpus, build_vocab(&corpus, size), 5).unwrap();
            for _ in 0..100 {
                let h = random_history(&mut rng, model.vocab());
                let ids = model.encode(&h);
                let total: f64 = model.vocab().support().map(|w| model.prob_ids(&ids, w)).sum();
                assert!((total - 1.0).abs() < 1e-6, "history {:?} sums to {}", h, total);
            }
        }
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn f32_model_tracks_f64() {
    let corpus = sentences(CORPORA[1]);
    let vocab = build_vocab(&corpus, usize::MAX);
    let m64: KnModel<f64> = train_kn(&corpus, vocab.clone(), 5).unwrap();
    let m32: KnModel<f32> = train_kn(&corpus, vocab, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let h = random_history(&mut rng, m64.vocab());
        let ids = m64.encode(&h);
        let total: f32 = m32.vocab().support().map(|w| m32.prob_ids(&ids, w)).sum();
        assert!((total - 1.0).abs() < 1e-4);
        for w in m64.vocab().support() {
            assert!((m64.prob_ids(&ids, w) - m32.prob_ids(&ids, w) as f64).abs() < 1e-5);
        }
    }
}

fn top_counts(model: &KnModelF64, corpus: &[Vec<String>]) -> HashMap<Vec<u32>, u64> {
    let order = model.order();
    let mut top = HashMap::new();
    for s in corpus {
        let mut ids = vec![model.vocab().id(BOS); order - 1];
        ids.extend(model.encode(s));
        ids.push(model.vocab().id(EOS));
        for g in ids.windows(order) {
            *top.entry(g.to_vec()).or_insert(0u64) += 1;
        }
    }
    top
}

#[test]
fn raising_a_count_never_lowers_its_probability() {
    for text in CORPORA {
        let corpus = sentences(text);
        let vocab = build_vocab(&corpus, usize::MAX);
        let base: KnModelF64 = train_kn(&corpus, vocab.clone(), 3).unwrap();
        let top = top_counts(&base, &corpus);
        let grams: Vec<Vec<u32>> = {
            let mut g: Vec<Vec<u32>> = top.keys().cloned().collect();
            g.sort();
            g
        };
        for gram in grams {
            let mut bumped = top.clone();
            *bumped.get_mut(&gram).unwrap() += 1;
            let mut model = KnModelF64::from_top_counts(vocab.clone(), 3, bumped).unwrap();
            for n in 1..=3 {
                model.set_discounts(n, base.discounts(n));
            }
            let (h, w) = gram.split_at(2);
            let before = base.prob_ids(h, w[0]);
            let after = model.prob_ids(h, w[0]);
            assert!(after >= before - 1e-15, "{:?}: {} -> {}", gram, before, after);
        }
    }
}

#[test]
fn training_beats_uniform_on_training_data() {
    for text in CORPORA {
        let corpus = sentences(text);
        let vocab = build_vocab(&corpus, usize::MAX);
        let trained: KnModelF64 = train_kn(&corpus, vocab.clone(), 5).unwrap();
        let uniform = KnModelF64::uniform(vocab.clone(), 5).unwrap();
        let p_trained = perplexity(&trained, &corpus, true).unwrap();
        let p_uniform = perplexity(&uniform, &corpus, true).unwrap();
        assert!((p_uniform - vocab.support_size() as f64).abs() < 1e-9);
        assert!(p_trained <= p_uniform, "{} > {}", p_trained, p_uniform);
    }
}

#[test]
fn long_histories_are_truncated() {
    let corpus = sentences(CORPORA[0]);
    let model: KnModelF64 = train_kn(&corpus, build_vocab(&corpus, usize::MAX), 5).unwrap();
    let long = ["e", "d", "a", "b", "c", "a"];
    for w in ["a", "b", "c", "d", "e", EOS, "unseen"] {
        assert_eq!(kn_logprob(&model, &long, w), kn_logprob(&model, &long[2..], w));
    }
}

#[test]
fn corpus_order_does_not_matter() {
    for text in CORPORA {
        let corpus = sentences(text);
        let mut shuffled = corpus.clone();
        shuffled.reverse();
        shuffled.rotate_left(corpus.len() / 2);
        let v1 = build_vocab(&corpus, 5);
        let v2 = build_vocab(&shuffled, 5);
        assert_eq!(v1, v2);
        let m1: KnModelF64 = train_kn(&corpus, v1, 4).unwrap();
        let m2: KnModelF64 = train_kn(&shuffled, v2, 4).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        m1.write_binary(&mut a).unwrap();
        m2.write_binary(&mut b).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn unknown_targets_are_left_out_of_perplexity() {
    let corpus = sentences("a b a b\nb a b a\n");
    let model: KnModelF64 = train_kn(&corpus, build_vocab(&corpus, usize::MAX), 2).unwrap();
    let with_unk = sentences("a b zz a b\n");
    let without = sentences("a b a b\n");
    let p_excl = perplexity(&model, &with_unk, true).unwrap();
    let p_incl = perplexity(&model, &with_unk, false).unwrap();
    assert_ne!(p_excl, p_incl);
    // Bigram model: excluding `zz` leaves the prediction of `a` after `zz`.
    let manual = {
        let lp = |h: &[&str], w: &str| kn_logprob(&model, h, w);
        let sum = lp(&[BOS], "a") + lp(&["a"], "b") + lp(&["zz"], "a") + lp(&["a"], "b") + lp(&["b"], EOS);
        (-sum / 5.0).exp()
    };
    assert!((p_excl - manual).abs() < 1e-12);
    assert!(perplexity(&model, &without, true).unwrap() < p_excl);
}

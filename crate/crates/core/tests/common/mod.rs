#![allow(dead_code)]

pub mod kn_oracle;

use std::path::PathBuf;

use agreebench_core::conllu::{read_conllu, Sentence};
use agreebench_core::lexgen::{build_counterpart_index, build_lexicon, CounterpartIndex, SubstitutionLexicon};
use agreebench_core::miner::{extract_original_testset, mine_constructions, MiningConfig, TestItem};
use agreebench_core::ngram::{FrequencyTable, Vocabulary};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn mini_treebank() -> Vec<Sentence> {
    let f = std::fs::File::open(fixture_path("mini_treebank.conllu")).unwrap();
    read_conllu(std::io::BufReader::new(f)).unwrap()
}

pub const FIXTURE_CONFIG: MiningConfig = MiningConfig { min_context_tokens: 3, min_per_number: 2 };

/// Vocabulary holding every form of the treebank.
pub fn treebank_vocab(tb: &[Sentence]) -> Vocabulary {
    let freq = FrequencyTable::from_sentences(tb.iter().map(|s| s.tokens.iter().map(|t| t.form.as_str())));
    Vocabulary::from_frequencies(&freq, usize::MAX)
}

pub struct Bench {
    pub treebank: Vec<Sentence>,
    pub vocab: Vocabulary,
    pub lexicon: SubstitutionLexicon,
    pub counterparts: CounterpartIndex,
    pub originals: Vec<TestItem>,
}

pub fn mini_bench() -> Bench {
    let treebank = mini_treebank();
    let vocab = treebank_vocab(&treebank);
    let lexicon = build_lexicon(&treebank, 0.1);
    let counterparts = build_counterpart_index(&treebank);
    let mined = mine_constructions(&treebank, FIXTURE_CONFIG);
    let originals = extract_original_testset(&treebank, &mined, &vocab, &counterparts);
    Bench { treebank, vocab, lexicon, counterparts, originals }
}

pub fn sentences(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| l.split_whitespace().map(str::to_owned).collect())
        .collect()
}

/// Three small training corpora of at most 200 tokens each.
pub const CORPORA: [&str; 3] = [
    "a b c a b d\n\
     b c a b c\n\
     d a b c c a\n\
     e a b c d\n\
     a a b b c c\n",
    "the dog runs\n\
     the dogs run\n\
     the girl the boys like goes\n\
     the boys the girl likes go\n\
     a dog and a cat run\n\
     the cat sleeps\n\
     the cats sleep and the dog runs\n\
     dogs run and cats sleep\n",
    "x y z x y z x y z\n\
     z y x\n\
     x x x y\n\
     y y z z x x\n\
     q x y\n\
     r s x y z q\n\
     x z\n\
     y\n",
];

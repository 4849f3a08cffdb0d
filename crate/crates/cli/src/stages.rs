//! The pipeline stages. Each reads its inputs, writes fixed file names into
//! its output directory and returns its manifest entry.

use std::collections::{BTreeSet, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use agreebench_core::conllu::{enrich_english_verb_number, read_conllu_lenient, Sentence};
use agreebench_core::harness::{evaluate, Evaluation, ExternalScorer, ItemFailure, KnScorer, Scorer, UnigramScorer};
use agreebench_core::jsonl::{read_jsonl, write_jsonl};
use agreebench_core::lexgen::{
    build_counterpart_index, build_lexicon, generate_fillers, generate_nonce_set, NonceResources,
};
use agreebench_core::miner::{extract_original_testset, mine_constructions, MiningConfig, TestItem};
use agreebench_core::ngram::{filter_corpus, perplexity, train_kn, FrequencyTable, KnModel, Vocabulary};
use agreebench_core::stats::read_judgments;
use agreebench_core::stats::report::{write_report, ReportOptions};
use agreebench_core::{EvalRecord, KnModelF64};
use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::{existing, usage};
use crate::manifest::{StageLog, StageRecord};

pub const CONSTRUCTIONS: &str = "constructions.jsonl";
pub const INSTANCES: &str = "instances.jsonl";
pub const ORIGINALS: &str = "originals.jsonl";
pub const NONCE: &str = "nonce.jsonl";
pub const FILLERS: &str = "fillers.jsonl";
pub const MODEL: &str = "kn.bin";
pub const MODEL_COUNTS: &str = "kn.counts.txt";
pub const VOCAB: &str = "vocab.tsv";
pub const UNIGRAM_COUNTS: &str = "counts.tsv";

/// Frequency below which a form is considered POS-ambiguous.
const AMBIGUITY_THRESHOLD: f64 = 0.1;

/// Settings shared by every stage.
#[derive(Clone, Copy, Debug, Default)]
pub struct Globals {
    pub enrich_en_verbs: bool,
}

#[derive(Args, Clone, Debug)]
pub struct ExtractArgs {
    /// CoNLL-U treebank.
    #[arg(long)]
    pub treebank: PathBuf,
    /// Vocabulary, `word<TAB>count` per line in rank order. Defaults to every treebank form.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Minimum number of tokens strictly between cue and target.
    #[arg(long, default_value_t = 3)]
    pub min_context: usize,
    /// Minimum instances per number for a construction to be kept.
    #[arg(long, default_value_t = 10)]
    pub min_per_number: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug)]
pub struct NonceArgs {
    /// Original items from `extract`.
    #[arg(long)]
    pub items: PathBuf,
    #[arg(long)]
    pub treebank: PathBuf,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 9)]
    pub variants: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug)]
pub struct FillersArgs {
    #[arg(long)]
    pub treebank: PathBuf,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Number of filler sentences.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 9)]
    pub variants: u32,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug)]
pub struct TrainArgs {
    /// One tokenized sentence per line, space-separated.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 50_000)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 5)]
    pub order: usize,
    /// Validation corpus; its perplexity (unknown targets excluded) is stored in the model.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// Training sentences with a larger share of out-of-vocabulary tokens are dropped.
    #[arg(long, default_value_t = 0.05)]
    pub max_unknown_ratio: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug)]
pub struct EvaluateArgs {
    /// Test item files; scored in the order given.
    #[arg(long, required = true, num_args = 1..)]
    pub items: Vec<PathBuf>,
    /// `kn:<model>`, `unigram:<counts.tsv>` or `ext:<shell command>`. Repeatable.
    #[arg(long, required = true)]
    pub scorer: Vec<String>,
    /// Scorers see only the last `window - 1` prefix tokens.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug)]
pub struct ReportArgs {
    /// Record files from `evaluate`, one per scorer.
    #[arg(long, required = true, num_args = 1..)]
    pub records: Vec<PathBuf>,
    /// Human judgments CSV.
    #[arg(long)]
    pub judgments: Option<PathBuf>,
    /// Ids of the control fillers used for subject filtering, one per line.
    #[arg(long)]
    pub control_fillers: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub permutations: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Sidecar of a record file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordsMeta {
    pub scorer: String,
    pub perplexity: Option<f64>,
    pub window: Option<usize>,
    pub n_records: usize,
    pub n_errored: usize,
    pub errored: Vec<ItemFailure>,
}

pub fn records_file(scorer: &str) -> String {
    let safe: String = scorer
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    format!("records-{}.jsonl", safe)
}

pub fn meta_path(records: &Path) -> PathBuf {
    let name = records.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = name.strip_suffix(".jsonl").unwrap_or(&name);
    records.with_file_name(format!("{}.meta.json", stem))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_items<T: Serialize>(log: &mut StageLog, name: &str, items: &[T]) -> Result<()> {
    let mut w = create(&log.path(name))?;
    write_jsonl(&mut w, items)?;
    w.flush()?;
    log.output(name)
}

fn read_items<T: serde::de::DeserializeOwned>(field: &str, path: &Path) -> Result<Vec<T>> {
    let path = existing(field, path)?;
    let f = File::open(&path)?;
    read_jsonl(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

pub fn load_treebank(log: &mut StageLog, path: &Path, g: Globals) -> Result<Vec<Sentence>> {
    let path = existing("treebank", path)?;
    log.input("treebank", &path)?;
    let f = File::open(&path)?;
    let read = read_conllu_lenient(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))?;
    for e in &read.skipped {
        log::warn!("{}: skipped sentence: {}", path.display(), e);
    }
    log.param("skipped_sentences", read.skipped.len());
    let mut sentences = read.sentences;
    if g.enrich_en_verbs {
        let added: usize = sentences.iter_mut().map(enrich_english_verb_number).sum();
        log::info!("enrichment added Number to {} verbs", added);
    }
    log.param("enrich_en_verbs", g.enrich_en_verbs);
    Ok(sentences)
}

/// The given vocabulary file, or every form of the treebank.
fn load_vocab(log: &mut StageLog, path: Option<&Path>, treebank: &[Sentence]) -> Result<Vocabulary> {
    match path {
        Some(p) => {
            let p = existing("vocab", p)?;
            log.input("vocab", &p)?;
            Vocabulary::read(BufReader::new(File::open(&p)?)).with_context(|| format!("reading {}", p.display()))
        }
        None => {
            let freq =
                FrequencyTable::from_sentences(treebank.iter().map(|s| s.tokens.iter().map(|t| t.form.as_str())));
            log.param("vocab", "treebank forms");
            Ok(Vocabulary::from_frequencies(&freq, usize::MAX))
        }
    }
}

pub fn extract(args: &ExtractArgs, g: Globals) -> Result<StageRecord> {
    out_dir(&args.out)?;
    let mut log = StageLog::start("extract", &args.out);
    let treebank = load_treebank(&mut log, &args.treebank, g)?;
    let vocab = load_vocab(&mut log, args.vocab.as_deref(), &treebank)?;
    let config = MiningConfig { min_context_tokens: args.min_context, min_per_number: args.min_per_number };
    log.param("min_context", args.min_context);
    log.param("min_per_number", args.min_per_number);

    let mined = mine_constructions(&treebank, config);
    let counterparts = build_counterpart_index(&treebank);
    let originals = extract_original_testset(&treebank, &mined, &vocab, &counterparts);
    log::info!(
        "{} constructions, {} instances, {} original items",
        mined.constructions.len(),
        mined.instances.len(),
        originals.len()
    );
    write_items(&mut log, CONSTRUCTIONS, &mined.constructions)?;
    write_items(&mut log, INSTANCES, &mined.instances)?;
    write_items(&mut log, ORIGINALS, &originals)?;
    Ok(log.finish())
}

pub fn nonce(args: &NonceArgs, g: Globals) -> Result<StageRecord> {
    out_dir(&args.out)?;
    let mut log = StageLog::start("nonce", &args.out);
    let items: Vec<TestItem> = read_items("items", &args.items)?;
    log.input("items", &args.items)?;
    let treebank = load_treebank(&mut log, &args.treebank, g)?;
    let vocab = load_vocab(&mut log, args.vocab.as_deref(), &treebank)?;
    log.seed("nonce", args.seed);
    log.param("variants", args.variants);
    log.param("ambiguity_threshold", AMBIGUITY_THRESHOLD);

    let lexicon = build_lexicon(&treebank, AMBIGUITY_THRESHOLD);
    let counterparts = build_counterpart_index(&treebank);
    let res = NonceResources { lexicon: &lexicon, counterparts: &counterparts, vocab: &vocab };
    let variants = generate_nonce_set(&items, &treebank, res, args.variants, args.seed)?;
    write_items(&mut log, NONCE, &variants)?;
    Ok(log.finish())
}

pub fn fillers(args: &FillersArgs, g: Globals) -> Result<StageRecord> {
    out_dir(&args.out)?;
    let mut log = StageLog::start("fillers", &args.out);
    let treebank = load_treebank(&mut log, &args.treebank, g)?;
    let vocab = load_vocab(&mut log, args.vocab.as_deref(), &treebank)?;
    log.seed("fillers", args.seed);
    log.param("n", args.n);
    log.param("variants", args.variants);

    let lexicon = build_lexicon(&treebank, AMBIGUITY_THRESHOLD);
    let counterparts = build_counterpart_index(&treebank);
    let res = NonceResources { lexicon: &lexicon, counterparts: &counterparts, vocab: &vocab };
    let items = generate_fillers(&treebank, res, args.n, args.variants, args.seed)?;
    write_items(&mut log, FILLERS, &items)?;
    Ok(log.finish())
}

fn read_corpus(field: &str, path: &Path) -> Result<Vec<Vec<String>>> {
    let path = existing(field, path)?;
    let f = File::open(&path)?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        let words: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
        if !words.is_empty() {
            out.push(words);
        }
    }
    Ok(out)
}

pub fn train_ngram(args: &TrainArgs, _g: Globals) -> Result<StageRecord> {
    if args.order == 0 {
        return Err(usage("`order` must be at least 1"));
    }
    out_dir(&args.out)?;
    let mut log = StageLog::start("train-ngram", &args.out);
    let corpus = read_corpus("corpus", &args.corpus)?;
    log.input("corpus", &args.corpus)?;
    log.param("vocab_size", args.vocab_size);
    log.param("order", args.order);
    log.param("max_unknown_ratio", args.max_unknown_ratio);

    let freq = FrequencyTable::from_sentences(&corpus);
    let vocab = Vocabulary::from_frequencies(&freq, args.vocab_size);
    let known: HashSet<String> = vocab.words().map(|(w, _)| w.to_owned()).collect();
    let kept: Vec<Vec<String>> = filter_corpus(corpus.iter().cloned(), &known, args.max_unknown_ratio).collect();
    log.param("training_sentences", kept.len());
    log.param("dropped_sentences", corpus.len() - kept.len());

    let mut model: KnModelF64 = train_kn(&kept, vocab.clone(), args.order)?;
    if let Some(valid) = &args.valid {
        let sentences = read_corpus("valid", valid)?;
        log.input("valid", valid)?;
        let ppl = perplexity(&model, &sentences, true)?;
        log::info!("validation perplexity {:.3}", ppl);
        model.valid_perplexity = Some(ppl);
    }
    log.param("variant", KnModel::<f64>::VARIANT);
    log.param("valid_perplexity", model.valid_perplexity);
    log.param("discounts", (1..=args.order).map(|n| model.discounts(n)).collect::<Vec<_>>());

    let mut w = create(&log.path(MODEL))?;
    model.write_binary(&mut w)?;
    w.flush()?;
    log.output(MODEL)?;
    let mut w = create(&log.path(MODEL_COUNTS))?;
    model.write_counts_text(&mut w)?;
    w.flush()?;
    log.output(MODEL_COUNTS)?;
    let mut w = create(&log.path(VOCAB))?;
    vocab.write(&mut w)?;
    w.flush()?;
    log.output(VOCAB)?;
    let mut w = create(&log.path(UNIGRAM_COUNTS))?;
    freq.write_tsv(&mut w)?;
    w.flush()?;
    log.output(UNIGRAM_COUNTS)?;
    Ok(log.finish())
}

/// A parsed `--scorer` value.
#[derive(Clone, Debug, PartialEq)]
pub enum ScorerSpec {
    Kn(PathBuf),
    Unigram(PathBuf),
    External(String),
}

impl std::str::FromStr for ScorerSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("kn", p)) if !p.is_empty() => Ok(ScorerSpec::Kn(p.into())),
            Some(("unigram", p)) if !p.is_empty() => Ok(ScorerSpec::Unigram(p.into())),
            Some(("ext", c)) if !c.trim().is_empty() => Ok(ScorerSpec::External(c.into())),
            _ => Err(usage(format!("`scorer`: expected kn:<model>, unigram:<counts> or ext:<command>, got `{}`", s))),
        }
    }
}

fn run_scorer(spec: &ScorerSpec, items: &[TestItem], window: Option<usize>, log: &mut StageLog) -> Result<Evaluation> {
    match spec {
        ScorerSpec::Kn(path) => {
            let path = existing("scorer", path)?;
            log.input(&format!("scorer:{}", path.display()), &path)?;
            let f = File::open(&path)?;
            let model: KnModelF64 =
                KnModel::read_binary(BufReader::new(f)).with_context(|| format!("loading {}", path.display()))?;
            let name = format!("kn{}", model.order());
            Ok(evaluate(items, &mut KnScorer::new(&model, name), window)?)
        }
        ScorerSpec::Unigram(path) => {
            let path = existing("scorer", path)?;
            log.input(&format!("scorer:{}", path.display()), &path)?;
            let freq = FrequencyTable::read_tsv(BufReader::new(File::open(&path)?))
                .with_context(|| format!("loading {}", path.display()))?;
            Ok(evaluate(items, &mut UnigramScorer::new(&freq, "unigram"), window)?)
        }
        ScorerSpec::External(cmd) => {
            let mut s = ExternalScorer::spawn(cmd, &[]).with_context(|| format!("starting `{}`", cmd))?;
            log.param(&format!("scorer:{}", s.name()), cmd);
            let e = evaluate(items, &mut s, window)?;
            s.shutdown().with_context(|| format!("stopping `{}`", cmd))?;
            Ok(e)
        }
    }
}

pub fn evaluate_stage(args: &EvaluateArgs, _g: Globals) -> Result<StageRecord> {
    if args.window == Some(0) {
        return Err(usage("`window` must be at least 1"));
    }
    let specs: Vec<ScorerSpec> = args.scorer.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    out_dir(&args.out)?;
    let mut log = StageLog::start("evaluate", &args.out);
    let mut items: Vec<TestItem> = Vec::new();
    for (k, path) in args.items.iter().enumerate() {
        items.extend(read_items::<TestItem>("items", path)?);
        log.input(&format!("items.{}", k), path)?;
    }
    log.param("window", args.window);
    log.param("n_items", items.len());

    let mut names = BTreeSet::new();
    for spec in &specs {
        let eval = run_scorer(spec, &items, args.window, &mut log)?;
        if !names.insert(eval.scorer.clone()) {
            return Err(usage(format!("`scorer`: two scorers are named `{}`", eval.scorer)));
        }
        log::info!("{}: accuracy {:.4}", eval.scorer, agreebench_core::harness::accuracy(&eval.records));
        let file = records_file(&eval.scorer);
        write_items(&mut log, &file, &eval.records)?;
        let meta = RecordsMeta {
            scorer: eval.scorer.clone(),
            perplexity: eval.perplexity,
            window: args.window,
            n_records: eval.records.len(),
            n_errored: eval.errored.len(),
            errored: eval.errored,
        };
        let meta_name = meta_path(Path::new(&file)).display().to_string();
        let mut w = create(&log.path(&meta_name))?;
        serde_json::to_writer_pretty(&mut w, &meta)?;
        writeln!(w)?;
        w.flush()?;
        log.output(&meta_name)?;
    }
    Ok(log.finish())
}

fn load_records(path: &Path) -> Result<Evaluation> {
    let records: Vec<EvalRecord> = read_items("records", path)?;
    let meta = meta_path(path);
    let (scorer, perplexity) = if meta.is_file() {
        let m: RecordsMeta = serde_json::from_reader(BufReader::new(File::open(&meta)?))
            .with_context(|| format!("reading {}", meta.display()))?;
        (m.scorer, m.perplexity)
    } else {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        (stem.strip_prefix("records-").unwrap_or(&stem).to_owned(), None)
    };
    Ok(Evaluation { scorer, perplexity, records, errored: Vec::new() })
}

pub fn report(args: &ReportArgs, _g: Globals) -> Result<StageRecord> {
    let mut evals = Vec::new();
    for path in &args.records {
        evals.push(load_records(path)?);
    }
    out_dir(&args.out)?;
    let mut log = StageLog::start("report", &args.out);
    for (k, path) in args.records.iter().enumerate() {
        log.input(&format!("records.{}", k), path)?;
    }
    let judgments = match &args.judgments {
        Some(p) => {
            let p = existing("judgments", p)?;
            log.input("judgments", &p)?;
            Some(read_judgments(File::open(&p)?).with_context(|| format!("reading {}", p.display()))?)
        }
        None => None,
    };
    let control_fillers = match &args.control_fillers {
        Some(p) => {
            let p = existing("control_fillers", p)?;
            log.input("control_fillers", &p)?;
            let text = fs::read_to_string(&p)?;
            Some(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_owned).collect())
        }
        None => None,
    };
    log.seed("permutations", args.seed);
    log.param("permutations", args.permutations);

    let opts = ReportOptions { judgments, control_fillers, permutations: args.permutations, seed: args.seed };
    let summary = write_report(&args.out, &evals, &opts)?;
    for f in &summary.files {
        log.output(f)?;
    }
    Ok(log.finish())
}

use std::path::PathBuf;

use anyhow::{Context, Result};

use crate::config::RunConfig;
use crate::manifest::{self, RunManifest, StageRecord};
use crate::stages::{self, EvaluateArgs, ExtractArgs, FillersArgs, Globals, NonceArgs, ReportArgs, TrainArgs};

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub window: Option<usize>,
    pub enrich_en_verbs: bool,
}

fn stage<F: FnOnce() -> Result<StageRecord>>(
    m: &mut RunManifest,
    dir: &std::path::Path,
    name: &str,
    f: F,
) -> Result<()> {
    log::info!("stage {}", name);
    let record = f().with_context(|| format!("stage `{}` failed", name))?;
    m.upsert(record);
    m.save(dir)
}

/// Runs train-ngram, extract, nonce, fillers (when requested), evaluate and
/// report into one directory with a single manifest.
pub fn run_pipeline(config_path: &std::path::Path, ov: Overrides) -> Result<PathBuf> {
    let mut cfg = RunConfig::load(config_path)?;
    if ov.out.is_some() {
        cfg.out = ov.out;
    }
    if let Some(s) = ov.seed {
        cfg.seeds = crate::config::Seeds { nonce: s, fillers: s, report: s };
    }
    if ov.window.is_some() {
        cfg.evaluate.window = ov.window;
    }
    cfg.enrich_en_verbs |= ov.enrich_en_verbs;
    cfg.validate()?;

    let out = cfg.out.clone().expect("validated");
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let g = Globals { enrich_en_verbs: cfg.enrich_en_verbs };
    let treebank = cfg.inputs.treebank.clone().expect("validated");
    let mut m = RunManifest::new(Some(manifest::digest(config_path)?));
    m.save(&out)?;

    let train = TrainArgs {
        corpus: cfg.inputs.corpus.clone().expect("validated"),
        vocab_size: cfg.ngram.vocab_size,
        order: cfg.ngram.order,
        valid: cfg.inputs.valid.clone(),
        max_unknown_ratio: cfg.ngram.max_unknown_ratio,
        out: out.clone(),
    };
    stage(&mut m, &out, "train-ngram", || stages::train_ngram(&train, g))?;

    let vocab = Some(cfg.inputs.vocab.clone().unwrap_or_else(|| out.join(stages::VOCAB)));
    let extract = ExtractArgs {
        treebank: treebank.clone(),
        vocab: vocab.clone(),
        min_context: cfg.mining.min_context,
        min_per_number: cfg.mining.min_per_number,
        out: out.clone(),
    };
    stage(&mut m, &out, "extract", || stages::extract(&extract, g))?;

    let nonce = NonceArgs {
        items: out.join(stages::ORIGINALS),
        treebank: treebank.clone(),
        vocab: vocab.clone(),
        seed: cfg.seeds.nonce,
        variants: cfg.nonce.variants,
        out: out.clone(),
    };
    stage(&mut m, &out, "nonce", || stages::nonce(&nonce, g))?;

    if cfg.nonce.fillers > 0 {
        let fillers = FillersArgs {
            treebank,
            vocab,
            n: cfg.nonce.fillers,
            variants: cfg.nonce.variants,
            seed: cfg.seeds.fillers,
            out: out.clone(),
        };
        stage(&mut m, &out, "fillers", || stages::fillers(&fillers, g))?;
    }

    let scorer: Vec<String> = cfg
        .evaluate
        .scorers
        .iter()
        .map(|s| match s.as_str() {
            "kn" => format!("kn:{}", out.join(stages::MODEL).display()),
            "unigram" => format!("unigram:{}", out.join(stages::UNIGRAM_COUNTS).display()),
            other => other.to_owned(),
        })
        .collect();
    let evaluate = EvaluateArgs {
        items: vec![out.join(stages::ORIGINALS), out.join(stages::NONCE)],
        scorer,
        window: cfg.evaluate.window,
        out: out.clone(),
    };
    stage(&mut m, &out, "evaluate", || stages::evaluate_stage(&evaluate, g))?;

    let records: Vec<PathBuf> = m
        .stages
        .iter()
        .find(|s| s.stage == "evaluate")
        .map(|s| {
            s.outputs
                .keys()
                .filter(|k| k.starts_with("records-") && k.ends_with(".jsonl"))
                .map(|k| out.join(k))
                .collect()
        })
        .unwrap_or_default();
    let report = ReportArgs {
        records,
        judgments: cfg.inputs.judgments.clone(),
        control_fillers: cfg.inputs.control_fillers.clone(),
        permutations: cfg.report.permutations,
        seed: cfg.seeds.report,
        out: out.clone(),
    };
    stage(&mut m, &out, "report", || stages::report(&report, g))?;
    Ok(out)
}

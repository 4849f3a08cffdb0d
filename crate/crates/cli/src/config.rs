//! The `run` configuration file. Relative paths are resolved against the
//! directory holding the file.

use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Deserialize;

use crate::error::{existing, usage};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub enrich_en_verbs: bool,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub mining: Mining,
    #[serde(default)]
    pub nonce: Nonce,
    #[serde(default)]
    pub ngram: Ngram,
    #[serde(default)]
    pub evaluate: Evaluate,
    #[serde(default)]
    pub report: Report,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub treebank: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub judgments: Option<PathBuf>,
    pub control_fillers: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub nonce: u64,
    pub fillers: u64,
    pub report: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { nonce: 1, fillers: 1, report: 1 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Mining {
    pub min_context: usize,
    pub min_per_number: usize,
}

impl Default for Mining {
    fn default() -> Self {
        Mining { min_context: 3, min_per_number: 10 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Nonce {
    pub variants: u32,
    pub fillers: usize,
}

impl Default for Nonce {
    fn default() -> Self {
        Nonce { variants: 9, fillers: 0 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ngram {
    pub vocab_size: usize,
    pub order: usize,
    pub max_unknown_ratio: f64,
}

impl Default for Ngram {
    fn default() -> Self {
        Ngram { vocab_size: 50_000, order: 5, max_unknown_ratio: 0.05 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Evaluate {
    pub window: Option<usize>,
    /// `kn` and `unigram` name the models trained by the run; any
    /// `kn:`, `unigram:` or `ext:` spec is passed through.
    pub scorers: Vec<String>,
}

impl Default for Evaluate {
    fn default() -> Self {
        Evaluate { window: None, scorers: vec!["kn".into(), "unigram".into()] }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Report {
    pub permutations: usize,
}

impl Default for Report {
    fn default() -> Self {
        Report { permutations: 10_000 }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let path = existing("config", path)?;
        let text = std::fs::read_to_string(&path).map_err(|e| usage(format!("`config`: {}: {}", path.display(), e)))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| usage(format!("`config`: {}", e)))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let i = &mut cfg.inputs;
        for p in [&mut i.treebank, &mut i.corpus, &mut i.valid, &mut i.vocab, &mut i.judgments, &mut i.control_fillers]
        {
            resolve(base, p);
        }
        resolve(base, &mut cfg.out);
        Ok(cfg)
    }

    /// Every required field is present and every named input exists.
    pub fn validate(&self) -> Result<()> {
        let i = &self.inputs;
        for (field, p) in [("inputs.treebank", &i.treebank), ("inputs.corpus", &i.corpus)] {
            match p {
                None => return Err(usage(format!("config field `{}` is missing", field))),
                Some(p) => {
                    existing(field, p)?;
                }
            }
        }
        for (field, p) in [
            ("inputs.valid", &i.valid),
            ("inputs.vocab", &i.vocab),
            ("inputs.judgments", &i.judgments),
            ("inputs.control_fillers", &i.control_fillers),
        ] {
            if let Some(p) = p {
                existing(field, p)?;
            }
        }
        if self.out.is_none() {
            return Err(usage("config field `out` is missing (or pass --out)"));
        }
        if self.ngram.order == 0 {
            return Err(usage("config field `ngram.order` must be at least 1"));
        }
        if self.evaluate.window == Some(0) {
            return Err(usage("config field `evaluate.window` must be at least 1"));
        }
        if self.evaluate.scorers.is_empty() {
            return Err(usage("config field `evaluate.scorers` is empty"));
        }
        Ok(())
    }
}

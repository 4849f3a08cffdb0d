//! `manifest.json`: one per output directory, one entry per stage.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const FILE_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub inputs: BTreeMap<String, FileDigest>,
    pub seeds: BTreeMap<String, u64>,
    pub params: BTreeMap<String, serde_json::Value>,
    pub outputs: BTreeMap<String, FileDigest>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: Option<FileDigest>,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(config: Option<FileDigest>) -> Self {
        RunManifest { tool: "agreebench".into(), version: env!("CARGO_PKG_VERSION").into(), config, stages: Vec::new() }
    }

    pub fn load_or_new(dir: &Path) -> Result<Self> {
        let path = dir.join(FILE_NAME);
        if !path.exists() {
            return Ok(Self::new(None));
        }
        let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        serde_json::from_reader(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
    }

    /// Replaces any earlier entry for the same stage.
    pub fn upsert(&mut self, record: StageRecord) {
        match self.stages.iter_mut().find(|s| s.stage == record.stage) {
            Some(slot) => *slot = record,
            None => self.stages.push(record),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(FILE_NAME);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut h = Sha256::new();
    io::copy(&mut File::open(path)?, &mut h)?;
    Ok(format!("{:x}", h.finalize()))
}

pub fn digest(path: &Path) -> Result<FileDigest> {
    let sha256 = sha256_file(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(FileDigest { path: path.display().to_string(), sha256 })
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Collects one stage's provenance while it runs.
pub struct StageLog {
    record: StageRecord,
    out_dir: PathBuf,
}

impl StageLog {
    pub fn start(stage: &str, out_dir: &Path) -> Self {
        StageLog {
            record: StageRecord {
                stage: stage.into(),
                inputs: BTreeMap::new(),
                seeds: BTreeMap::new(),
                params: BTreeMap::new(),
                outputs: BTreeMap::new(),
                started_unix_ms: now_ms(),
                finished_unix_ms: 0,
            },
            out_dir: out_dir.to_owned(),
        }
    }

    pub fn input(&mut self, field: &str, path: &Path) -> Result<()> {
        self.record.inputs.insert(field.into(), digest(path)?);
        Ok(())
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.record.seeds.insert(name.into(), seed);
    }

    pub fn param(&mut self, name: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.record.params.insert(name.into(), v);
    }

    /// Path of an output file in the stage directory.
    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn output(&mut self, name: &str) -> Result<()> {
        let d = digest(&self.out_dir.join(name))?;
        self.record.outputs.insert(name.into(), FileDigest { path: name.into(), sha256: d.sha256 });
        Ok(())
    }

    pub fn finish(mut self) -> StageRecord {
        self.record.finished_unix_ms = now_ms();
        self.record
    }
}

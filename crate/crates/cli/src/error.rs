use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Result};

/// Bad invocation or configuration; the process exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(UsageError(msg.into()))
}

pub fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|e| e.is::<UsageError>())
}

/// An input file that must exist; the diagnostic names the field.
pub fn existing(field: &str, path: &Path) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path.to_owned())
    } else {
        Err(usage(format!("`{}`: no such file: {}", field, path.display())))
    }
}

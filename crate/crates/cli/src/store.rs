//! Data-directory layout, idempotent writes and the run lock.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use corrcast_core::correlation::{CodingScheme, Variant};
use corrcast_core::portfolio::PairKey;

pub const LOCK_FILE: &str = ".corrcast.lock";
pub const PARTIAL_MARKER: &str = ".partial";

/// Writes `bytes` unless the file already holds exactly them. Returns
/// whether the file changed.
pub fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<bool> {
    if let Ok(existing) = fs::read(path) {
        if existing == bytes {
            return Ok(false);
        }
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let tmp = path.with_extension("tmp~");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("replacing {}", path.display()))?;
    Ok(true)
}

/// Renders with `f` into memory, then [`write_if_changed`].
pub fn write_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> corrcast_core::Result<()>) -> Result<bool> {
    let mut buf = Vec::new();
    f(&mut buf).with_context(|| format!("rendering {}", path.display()))?;
    write_if_changed(path, &buf)
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<bool> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_if_changed(path, text.as_bytes())
}

/// Exclusive hold on a data directory for one command.
#[derive(Debug)]
pub struct DataLock {
    path: PathBuf,
}

impl DataLock {
    pub fn acquire(data_dir: &Path) -> Result<Self> {
        fs::create_dir_all(data_dir).with_context(|| format!("creating {}", data_dir.display()))?;
        let path = data_dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => bail!(
                "{} exists: another corrcast command is using this data directory \
                 (remove the file if no command is running)",
                path.display()
            ),
            Err(e) => Err(e).with_context(|| format!("creating {}", path.display())),
        }
    }
}

impl Drop for DataLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Paths of every artifact under the data directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

/// File-name-safe form of a ticker.
pub fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn prices_dir(&self) -> PathBuf {
        self.root.join("prices")
    }

    pub fn price_file(&self, ticker: &str) -> PathBuf {
        self.prices_dir().join(format!("{}.csv", slug(ticker)))
    }

    pub fn corpus(&self) -> PathBuf {
        self.root.join("corpus.jsonl")
    }

    pub fn bond_dir(&self) -> PathBuf {
        self.root.join("bond")
    }

    pub fn spliced_bond(&self, ticker: &str) -> PathBuf {
        self.bond_dir().join(format!("{}.csv", slug(ticker)))
    }

    pub fn correlations_dir(&self) -> PathBuf {
        self.root.join("correlations")
    }

    /// Suffix for pairs other than the stock/bond pair.
    fn pair_suffix(pair: Option<&PairKey>) -> String {
        pair.map_or_else(String::new, |p| format!("__{}__{}", slug(p.first()), slug(p.second())))
    }

    pub fn realized(&self, pair: Option<&PairKey>) -> PathBuf {
        self.correlations_dir()
            .join(format!("realized{}.csv", Self::pair_suffix(pair)))
    }

    pub fn predictions_dir(&self) -> PathBuf {
        self.root.join("predictions")
    }

    pub fn prediction(&self, predictor: &str, scheme: CodingScheme, variant: Variant, pair: Option<&PairKey>) -> PathBuf {
        self.predictions_dir().join(format!(
            "{predictor}-{}-{}{}.csv",
            scheme.label(),
            variant.label(),
            Self::pair_suffix(pair)
        ))
    }

    pub fn transcripts(&self, predictor: &str, scheme: CodingScheme) -> PathBuf {
        self.root
            .join("transcripts")
            .join(format!("{predictor}-{}.jsonl", scheme.label()))
    }

    pub fn simulate_dir(&self) -> PathBuf {
        self.root.join("simulate")
    }

    pub fn tests_dir(&self) -> PathBuf {
        self.root.join("tests")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }

    pub fn partial_marker(&self, stage: &str) -> PathBuf {
        self.root.join(stage).join(PARTIAL_MARKER)
    }
}

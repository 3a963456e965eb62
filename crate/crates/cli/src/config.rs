//! Settings file (`key = value` lines) and the resolved run configuration.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use facetrace_core::preprocess::{
    SplitCounts, DEFAULT_FACE_SIZE, DEFAULT_FRONTAL_HI, DEFAULT_FRONTAL_LO,
};
use facetrace_core::stats::DEFAULT_NEG_LOG10_CAP;

/// Keys accepted in a settings file; identical to the long flag names.
pub const KEYS: [&str; 15] = [
    "root",
    "landmarks",
    "out",
    "lo",
    "hi",
    "size",
    "train",
    "val",
    "test",
    "seed",
    "cap",
    "workers",
    "predictions",
    "report",
    "whole-image-only",
];

#[derive(Debug, Default)]
pub struct SettingsFile {
    path: PathBuf,
    values: BTreeMap<String, (usize, String)>,
}

impl SettingsFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(path, &text)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}:{}: expected key = value", path.display(), i + 1);
            };
            let key = key.trim();
            if !KEYS.contains(&key) {
                bail!("{}:{}: unknown key {key:?}", path.display(), i + 1);
            }
            if values
                .insert(key.to_string(), (i + 1, value.trim().to_string()))
                .is_some()
            {
                bail!("{}:{}: duplicate key {key:?}", path.display(), i + 1);
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            values,
        })
    }

    /// The flag value if given, else the file value, else `None`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some((line, raw)) => raw.parse().map(Some).map_err(|e| {
                anyhow::anyhow!("{}:{line}: invalid {key} {raw:?}: {e}", self.path.display())
            }),
        }
    }

    pub fn require<T>(&self, flag: Option<T>, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.pick(flag, key)?
            .with_context(|| format!("--{key} is required (flag or config file)"))
    }

    /// Boolean switches: present on the command line forces true.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.pick::<bool>(None, key)?.unwrap_or(false))
    }
}

/// Fully resolved settings shared by all subcommands.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub lo: f64,
    pub hi: f64,
    pub size: usize,
    pub counts: SplitCounts,
    pub seed: u64,
    pub cap: f64,
    pub workers: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            lo: DEFAULT_FRONTAL_LO,
            hi: DEFAULT_FRONTAL_HI,
            size: DEFAULT_FACE_SIZE,
            counts: SplitCounts::default(),
            seed: 0,
            cap: DEFAULT_NEG_LOG10_CAP,
            workers: 0,
        }
    }
}

impl Config {
    /// Defaults overridden by any keys present in `settings`.
    pub fn from_settings(settings: &SettingsFile) -> Result<Self> {
        let d = Self::default();
        Ok(Self {
            lo: settings.pick(None, "lo")?.unwrap_or(d.lo),
            hi: settings.pick(None, "hi")?.unwrap_or(d.hi),
            size: settings.pick(None, "size")?.unwrap_or(d.size),
            counts: SplitCounts {
                train: settings.pick(None, "train")?.unwrap_or(d.counts.train),
                val: settings.pick(None, "val")?.unwrap_or(d.counts.val),
                test: settings.pick(None, "test")?.unwrap_or(d.counts.test),
            },
            seed: settings.pick(None, "seed")?.unwrap_or(d.seed),
            cap: settings.pick(None, "cap")?.unwrap_or(d.cap),
            workers: settings.pick(None, "workers")?.unwrap_or(d.workers),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            bail!(
                "frontal thresholds must satisfy lo < hi (got {} and {})",
                self.lo,
                self.hi
            );
        }
        if self.size < 3 {
            bail!("--size must be at least 3 (got {})", self.size);
        }
        if !(self.cap.is_finite() && self.cap > 0.0) {
            bail!("--cap must be positive (got {})", self.cap);
        }
        Ok(())
    }
}

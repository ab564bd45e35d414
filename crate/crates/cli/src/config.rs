//! `key = value` settings files for `cellflow experiment`.
//!
//! One setting per line; `#` starts a comment; blank lines are ignored.
//! Keys are the long flag names without the leading dashes.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

pub const KEYS: [&str; 23] = [
    "in",
    "synth",
    "duration",
    "session-len",
    "tower",
    "user",
    "preset",
    "bin-size",
    "history",
    "padding",
    "max-run",
    "nonzero-filter",
    "features",
    "target",
    "train-fraction",
    "epochs",
    "learning-rate",
    "batch-size",
    "hidden",
    "clip-norm",
    "k",
    "out",
    "seed",
];

#[derive(Debug, Default, Clone, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, (String, usize)>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {line_no}: expected `key = value`"))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                bail!("line {line_no}: unknown key `{key}` (valid: {})", KEYS.join(", "));
            }
            if entries.insert(key.to_string(), (value.trim().to_string(), line_no)).is_some() {
                bail!("line {line_no}: `{key}` is set twice");
            }
        }
        Ok(Self { entries })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((value, line)) => value
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("config line {line}: invalid `{key}` value `{value}`: {e}")),
        }
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        Ok(self.get::<bool>(key)?.unwrap_or(false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_values_comments_and_blank_lines() {
        let c = ConfigFile::parse("# run\nseed = 7\n\nbin-size=3 # coarse\nnonzero-filter = true\n").unwrap();
        assert_eq!(c.get::<u64>("seed").unwrap(), Some(7));
        assert_eq!(c.get::<f64>("bin-size").unwrap(), Some(3.0));
        assert!(c.flag("nonzero-filter").unwrap());
        assert_eq!(c.get::<usize>("epochs").unwrap(), None);
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert!(ConfigFile::parse("colour = red").unwrap_err().to_string().contains("unknown key"));
        assert!(ConfigFile::parse("seed=1\nseed=2").unwrap_err().to_string().contains("twice"));
        assert!(ConfigFile::parse("seed").unwrap_err().to_string().contains("key = value"));
    }

    #[test]
    fn bad_value_names_key_and_line() {
        let c = ConfigFile::parse("\nepochs = many").unwrap();
        let msg = c.get::<usize>("epochs").unwrap_err().to_string();
        assert!(msg.contains("line 2") && msg.contains("epochs"), "{msg}");
    }
}

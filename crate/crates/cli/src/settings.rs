//! Key=value parameter files. Lines are `key = value`; blank lines and `#`
//! comments are ignored. Command-line flags always win over file values.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

pub struct Settings(BTreeMap<String, String>);

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut map = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((k, v)) = line.split_once('=') else {
                    bail!("{}:{}: expected key=value, got: {line}", path.display(), i + 1);
                };
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(Settings(map))
    }

    /// File value for `key`, parsed, or `None` when absent.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => match v.parse() {
                Ok(t) => Ok(Some(t)),
                Err(_) => bail!("bad value for {key}: {v}"),
            },
        }
    }

    /// Resolves flag > file > default.
    pub fn value<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        match flag {
            Some(t) => Ok(t),
            None => Ok(self.get(key)?.unwrap_or(default)),
        }
    }

    /// String variant of [`Settings::value`].
    pub fn value_str(&self, flag: Option<&str>, key: &str, default: &str) -> Result<String> {
        Ok(match flag {
            Some(s) => s.to_string(),
            None => self.0.get(key).cloned().unwrap_or_else(|| default.to_string()),
        })
    }
}

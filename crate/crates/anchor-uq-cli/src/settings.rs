//! Flat key-value config files and the flag > file > default precedence.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

/// Parsed `key = value` document; `#` starts a comment.
#[derive(Debug, Default, Clone)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Settings> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}: line {}: expected 'key = value'", path.display(), i + 1);
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Settings { values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => match raw.parse() {
                Ok(v) => Ok(Some(v)),
                Err(e) => bail!("config key '{key}': {e}"),
            },
        }
    }

    pub fn get_string(&self, key: &str) -> Option<String> {
        self.values.get(key).cloned()
    }
}

/// CLI flag beats config file beats default.
pub fn resolve<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

/// Default seed: `ANCHOR_UQ_SEED` if set, else 0.
pub fn env_seed() -> Result<u64> {
    match std::env::var("ANCHOR_UQ_SEED") {
        Ok(raw) => raw
            .parse()
            .with_context(|| format!("ANCHOR_UQ_SEED='{raw}' is not an integer")),
        Err(_) => Ok(0),
    }
}

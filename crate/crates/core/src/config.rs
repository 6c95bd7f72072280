//! Flat `key = value` run configuration files.
//!
//! Blank lines and anything after `#` are ignored. Each subcommand declares
//! the keys it understands and anything else is rejected, so a typo fails
//! loudly instead of silently falling back to a default.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(text: &str, allowed: &[&str]) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {raw:?}", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !allowed.contains(&key) {
                return Err(Error::Config(format!(
                    "line {}: unknown key {key:?} (accepted: {})",
                    lineno + 1,
                    allowed.join(", ")
                )));
            }
            if value.is_empty() {
                return Err(Error::Config(format!("line {}: empty value for {key}", lineno + 1)));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key}", lineno + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: impl AsRef<Path>, allowed: &[&str]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, allowed)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// Typed lookup; `None` when the key is absent.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEYS: &[&str] = &["m", "noise_sigma", "mix"];

    #[test]
    fn parses_comments_and_types() {
        let cfg = RunConfig::parse("# header\nm = 100  # rows\n\nnoise_sigma=0.05\nmix = true\n", KEYS).unwrap();
        assert_eq!(cfg.get::<usize>("m").unwrap(), Some(100));
        assert_eq!(cfg.get::<f64>("noise_sigma").unwrap(), Some(0.05));
        assert_eq!(cfg.get::<bool>("mix").unwrap(), Some(true));
        assert_eq!(cfg.get_or("absent", 3usize).unwrap(), 3);
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        for text in ["bogus = 1", "m = 1\nm = 2", "m 1", "m ="] {
            assert!(matches!(RunConfig::parse(text, KEYS), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn type_errors_are_config_errors() {
        let cfg = RunConfig::parse("m = -4", KEYS).unwrap();
        assert!(matches!(cfg.get::<usize>("m"), Err(Error::Config(_))));
    }
}

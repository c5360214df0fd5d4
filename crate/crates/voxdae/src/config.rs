//! Flat `key = value` experiment configuration files.
//!
//! Grammar, line by line: anything from `#` to the end of the line is a
//! comment; blank lines are skipped; every other line is `key = value` with
//! the key matching `[A-Za-z_][A-Za-z0-9_.-]*`. Values are free text with
//! surrounding whitespace trimmed. Later assignments to the same key win,
//! and command-line flags override file values.

use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigErrorKind {
    #[error("missing `=`")]
    MissingEquals,
    #[error("empty key")]
    EmptyKey,
    #[error("invalid key `{0}`")]
    BadKey(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("config line {line}: {kind}")]
pub struct ConfigError {
    pub line: usize,
    pub kind: ConfigErrorKind,
}

/// Parsed configuration: ordered, deduplicated key/value pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

fn valid_key(key: &str) -> bool {
    let mut chars = key.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

pub fn parse_config(text: &str) -> Result<ConfigMap, ConfigError> {
    let mut map = ConfigMap::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError {
                line,
                kind: ConfigErrorKind::MissingEquals,
            });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError {
                line,
                kind: ConfigErrorKind::EmptyKey,
            });
        }
        if !valid_key(key) {
            return Err(ConfigError {
                line,
                kind: ConfigErrorKind::BadKey(key.to_string()),
            });
        }
        map.set(key, value.trim());
    }
    Ok(map)
}

impl ConfigMap {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Canonical rendering: sorted `key = value` lines. Two configs with the
    /// same meaning hash identically regardless of source formatting.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    /// Hash of the canonical text; stamped into checkpoints and reports.
    pub fn hash(&self) -> u64 {
        crate::rng::fnv1a64(self.canonical_text().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_overrides() {
        let text = "# experiment\nlr = 0.1\nepochs= 500   # paper default\n\nnoise = random:0.5\nlr = 0.2\n";
        let map = parse_config(text).unwrap();
        assert_eq!(map.get("lr"), Some("0.2"));
        assert_eq!(map.get("epochs"), Some("500"));
        assert_eq!(map.get("noise"), Some("random:0.5"));
        assert_eq!(map.get("absent"), None);
    }

    #[test]
    fn canonical_text_is_sorted_and_hash_is_formatting_independent() {
        let a = parse_config("b = 2\na = 1\n").unwrap();
        let b = parse_config("a=1   # comment\n\nb =  2\n").unwrap();
        assert_eq!(a.canonical_text(), "a = 1\nb = 2\n");
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(
            parse_config("lr = 0.1\nbroken line\n").unwrap_err(),
            ConfigError {
                line: 2,
                kind: ConfigErrorKind::MissingEquals
            }
        );
        assert_eq!(
            parse_config("= 3\n").unwrap_err().kind,
            ConfigErrorKind::EmptyKey
        );
        assert_eq!(
            parse_config("9lives = 3\n").unwrap_err().kind,
            ConfigErrorKind::BadKey("9lives".into())
        );
    }
}

//! Flat `key=value` settings: command-line flags first, then a config file
//! whose entries take precedence. Typed reads collect every problem so a run
//! reports all of them at once, before computing anything.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CliError, CliResult};

#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
    known: Vec<String>,
    errors: Vec<String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl Settings {
    /// Registers `key` and records its flag value, if any.
    pub fn flag(&mut self, key: &str, value: Option<impl Display>) -> &mut Self {
        let key = normalize(key);
        if let Some(v) = value {
            self.values.insert(key.clone(), v.to_string());
        }
        if !self.known.contains(&key) {
            self.known.push(key);
        }
        self
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_str(&text, &path.display().to_string());
        Ok(())
    }

    pub fn apply_str(&mut self, text: &str, origin: &str) {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    let key = normalize(k);
                    if self.known.contains(&key) {
                        self.values.insert(key, v.trim().to_owned());
                    } else {
                        self.errors.push(format!("{origin}:{}: unknown key {key:?}", i + 1));
                    }
                }
                None => self.errors.push(format!("{origin}:{}: expected key=value", i + 1)),
            }
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: Display,
    {
        let raw = self.values.get(key)?;
        match raw.parse() {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors.push(format!("{key}={raw}: {e}"));
                None
            }
        }
    }

    pub fn get_or<T: FromStr>(&mut self, key: &str, default: T) -> T
    where
        T::Err: Display,
    {
        self.get(key).unwrap_or(default)
    }

    pub fn require<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: Display,
    {
        if !self.values.contains_key(key) {
            self.errors.push(format!("{key} is required"));
            return None;
        }
        self.get(key)
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&mut self, key: &str) -> Option<Vec<T>>
    where
        T::Err: Display,
    {
        let raw = self.values.get(key)?.clone();
        let mut out = Vec::new();
        for part in raw.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.parse() {
                Ok(v) => out.push(v),
                Err(e) => {
                    self.errors.push(format!("{key}: {part:?}: {e}"));
                    return None;
                }
            }
        }
        Some(out)
    }

    pub fn error(&mut self, message: impl Into<String>) {
        self.errors.push(message.into());
    }

    pub fn check(&mut self, ok: bool, message: impl FnOnce() -> String) {
        if !ok {
            self.errors.push(message());
        }
    }

    /// Fails with every recorded problem.
    pub fn finish(&mut self) -> CliResult<()> {
        if self.errors.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(std::mem::take(&mut self.errors)))
        }
    }

    /// Resolved settings as sorted `key=value` lines, leaving out `skip`.
    pub fn echo(&self, skip: &[&str]) -> String {
        self.values
            .iter()
            .filter(|(k, _)| !skip.contains(&k.as_str()))
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

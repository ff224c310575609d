//! Flat `key = value` config files layered under command-line flags.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

/// Values read from a config file. Every lookup marks its key as used;
/// [`Layered::finish`] rejects whatever was never asked for.
#[derive(Debug, Default)]
pub struct Layered {
    source: Option<PathBuf>,
    values: BTreeMap<String, (usize, String)>,
    used: BTreeSet<String>,
}

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

impl Layered {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Path(format!("cannot read config {}: {e}", path.display())))?;
        let mut out = Self::parse(&text).map_err(|m| CliError::Config(format!("{}: {m}", path.display())))?;
        out.source = Some(path.to_path_buf());
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", idx + 1))?;
            let key = normalize(k);
            if key.is_empty() {
                return Err(format!("line {}: empty key", idx + 1));
            }
            if values.insert(key.clone(), (idx + 1, v.trim().to_string())).is_some() {
                return Err(format!("line {}: duplicate key '{key}'", idx + 1));
            }
        }
        Ok(Self {
            source: None,
            values,
            used: BTreeSet::new(),
        })
    }

    fn raw(&mut self, key: &str) -> Option<(usize, String)> {
        let key = normalize(key);
        self.used.insert(key.clone());
        self.values.get(&key).cloned()
    }

    /// The flag when given, else the file's value, else `None`.
    pub fn pick<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let from_file = self.raw(key);
        if flag.is_some() {
            return Ok(flag);
        }
        match from_file {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Config(format!("line {line}: bad value '{v}' for {key}: {e}"))),
        }
    }

    /// A boolean switch: set by the flag, or by `true`/`false` in the file.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool, CliError> {
        Ok(self.pick::<bool>(key, flag.then_some(true))?.unwrap_or(false))
    }

    /// A list flag; the file form is comma separated.
    pub fn list(&mut self, key: &str, flag: Vec<String>) -> Vec<String> {
        let from_file = self.raw(key);
        if !flag.is_empty() {
            return flag;
        }
        from_file
            .map(|(_, v)| {
                v.split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn finish(self) -> Result<(), CliError> {
        let unknown: Vec<&String> = self.values.keys().filter(|k| !self.used.contains(*k)).collect();
        if unknown.is_empty() {
            return Ok(());
        }
        let names: Vec<&str> = unknown.iter().map(|s| s.as_str()).collect();
        let from = self
            .source
            .as_ref()
            .map(|p| format!(" in {}", p.display()))
            .unwrap_or_default();
        Err(CliError::Config(format!("unknown key(s){from}: {}", names.join(", "))))
    }
}

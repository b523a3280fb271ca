//! Flat `key = value` config files. Flags given on the command line win over
//! file values, which win over built-in defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl ConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected 'key = value', got {raw:?}", i + 1)))?;
            let key = normalize(k);
            if key.is_empty() {
                return Err(CliError::Usage(format!("config line {}: empty key", i + 1)));
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::Usage(format!("config line {}: duplicate key {key}", i + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    /// Rejects keys outside `known`, to catch typos.
    pub fn check_keys(&self, known: &[&str]) -> CliResult<()> {
        for k in self.values.keys() {
            if !known.contains(&k.as_str()) {
                return Err(CliError::Usage(format!(
                    "unknown config key {k:?}; expected one of: {}",
                    known.join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Flag value if present, else the parsed file value, else `default`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            Some(v) => v
                .parse()
                .map_err(|e| CliError::Usage(format!("config key {key}: cannot parse {v:?}: {e}"))),
            None => Ok(default),
        }
    }

    pub fn pick_opt<T>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.values
            .get(key)
            .map(|v| v.parse().map_err(|e| CliError::Usage(format!("config key {key}: cannot parse {v:?}: {e}"))))
            .transpose()
    }
}

/// Comma-separated list of positive widths; the empty string means none.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Widths(pub Vec<usize>);

impl FromStr for Widths {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.is_empty() || s == "none" {
            return Ok(Widths(Vec::new()));
        }
        s.split(',')
            .map(|w| match w.trim().parse::<usize>() {
                Ok(0) | Err(_) => Err(format!("invalid width {w:?}")),
                Ok(v) => Ok(v),
            })
            .collect::<Result<_, _>>()
            .map(Widths)
    }
}

impl Display for Widths {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

//! Flat `key = value` settings shared by config files, flags and manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nppq::{Error, MemoryLimit, ModelParams, Result};

/// Effective configuration of one run; keys match the long flag names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn from_map(values: BTreeMap<String, String>) -> Self {
        Self { values }
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("config line {}: expected key = value", i + 1))
            })?;
            let value = value.trim().trim_matches('"');
            values.insert(key.trim().replace('_', "-"), value.to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn extend(&mut self, other: Settings) {
        self.values.extend(other.values);
    }

    pub fn map(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::InvalidParameter(format!("cannot parse {key} = {v:?}"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.raw(key) {
            None => Ok(false),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(v) => Err(Error::InvalidParameter(format!(
                "{key} expects true/false, got {v:?}"
            ))),
        }
    }

    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(raw) = self.raw(key) else {
            return Ok(None);
        };
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("cannot parse {key} entry {s:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    pub fn memory_limit(&self) -> Result<MemoryLimit> {
        match self.raw("memory-limit") {
            Some(raw) => nppq::memory::parse_bytes(raw).map(MemoryLimit),
            None => MemoryLimit::from_env(),
        }
    }

    pub fn servers(&self) -> Result<usize> {
        self.get_or("c", 1)
    }

    pub fn mu(&self) -> Result<f64> {
        self.get_or("mu", 1.0)
    }

    /// Builds the model from exactly one of `lambda` or `r` + `nu`.
    pub fn model(&self) -> Result<ModelParams> {
        let nu = self.list("nu")?;
        match (self.list("lambda")?, self.get::<f64>("r")?) {
            (Some(_), Some(_)) => Err(Error::InvalidParameter(
                "give either --lambda or --r/--nu, not both".into(),
            )),
            (Some(lambda), None) => {
                if nu.is_some() {
                    return Err(Error::InvalidParameter(
                        "--nu requires --r, not --lambda".into(),
                    ));
                }
                ModelParams::from_arrivals(&lambda, self.mu()?, self.servers()?)
            }
            (None, Some(r)) => {
                let nu = nu.ok_or_else(|| Error::InvalidParameter("--r requires --nu".into()))?;
                ModelParams::from_fractions(r, &nu, self.servers()?, self.mu()?)
            }
            (None, None) => Err(Error::InvalidParameter(
                "no model given: use --lambda or --r with --nu".into(),
            )),
        }
    }
}

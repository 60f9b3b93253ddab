//! Run-config grammar: one `key = value` pair per line, `#` starts a
//! comment, blank lines ignored. Keys are dotted lowercase identifiers;
//! values run to end of line. The typed accessors consume keys so callers
//! can reject anything left over.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub fn parse_config_str(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::config(format!(
                "line {}: expected `key = value`, got {line:?}",
                lineno + 1
            )));
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty()
            || !key
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '.' || c == '_')
        {
            return Err(Error::config(format!("line {}: bad key {key:?}", lineno + 1)));
        }
        if value.is_empty() {
            return Err(Error::config(format!("line {}: empty value for {key:?}", lineno + 1)));
        }
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(Error::config(format!("line {}: duplicate key {key:?}", lineno + 1)));
        }
    }
    Ok(map)
}

/// Key-consuming view over a parsed config; `finish` rejects unknown keys.
#[derive(Debug)]
pub struct ConfigMap {
    map: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn from_str(text: &str) -> Result<Self> {
        Ok(ConfigMap { map: parse_config_str(text)? })
    }

    pub fn from_map(map: BTreeMap<String, String>) -> Self {
        ConfigMap { map }
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.map.insert(key.to_string(), value);
    }

    pub fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    pub fn take_parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::config(format!("config key {key} = {raw:?} is not a valid value"))
            }),
        }
    }

    pub fn take_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.take_parsed(key)?.unwrap_or(default))
    }

    pub fn take_required<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        self.take_parsed(key)?
            .ok_or_else(|| Error::config(format!("missing required config key {key}")))
    }

    pub fn take_f64_list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| {
                        Error::config(format!("config key {key}: bad number {s:?}"))
                    })
                })
                .collect::<Result<Vec<f64>>>()
                .map(Some),
        }
    }

    pub fn take_u32_list(&mut self, key: &str) -> Result<Option<Vec<u32>>> {
        match self.take(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|s| {
                    s.trim().parse::<u32>().map_err(|_| {
                        Error::config(format!("config key {key}: bad integer {s:?}"))
                    })
                })
                .collect::<Result<Vec<u32>>>()
                .map(Some),
        }
    }

    /// Errors if any key was never consumed (catches typos).
    pub fn finish(self) -> Result<()> {
        if let Some((key, _)) = self.map.into_iter().next() {
            return Err(Error::config(format!("unknown config key {key:?}")));
        }
        Ok(())
    }
}

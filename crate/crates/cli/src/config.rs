//! Layered settings: command-line flags over a config file over defaults.
//!
//! Config files are either a JSON object or `key = value` lines (`#` starts a
//! comment). Keys are matched after lowercasing and mapping `-` to `_`, so
//! `s-rho`, `s_rho` and `S_RHO` are the same key.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use nested_risk::Error;

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        let trimmed = text.trim_start();
        let mut values = BTreeMap::new();
        if trimmed.starts_with('{') {
            let json: serde_json::Map<String, serde_json::Value> = serde_json::from_str(trimmed)
                .map_err(|e| Error::Validation(format!("config is not a JSON object: {e}")))?;
            for (k, v) in json {
                let s = match v {
                    serde_json::Value::String(s) => s,
                    serde_json::Value::Array(items) => items
                        .iter()
                        .map(|i| i.as_str().map_or_else(|| i.to_string(), str::to_string))
                        .collect::<Vec<_>>()
                        .join(","),
                    other => other.to_string(),
                };
                values.insert(normalize(&k), s);
            }
        } else {
            for (lineno, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| Error::Validation(format!("config line {}: expected key = value", lineno + 1)))?;
                values.insert(normalize(k), v.trim().to_string());
            }
        }
        Ok(Self { values })
    }

    /// Flag value if given, else the config entry under `key`, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, Error>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(&normalize(key)) {
            Some(raw) => raw
                .parse()
                .map_err(|e| Error::Validation(format!("config key '{key}' = '{raw}': {e}"))),
            None => Ok(default),
        }
    }

    /// As [`Self::pick`] for comma-separated lists.
    pub fn pick_list<T: FromStr>(&self, flag: Option<Vec<T>>, key: &str, default: Vec<T>) -> Result<Vec<T>, Error>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(&normalize(key)) {
            Some(raw) => parse_list(raw).map_err(|e| Error::Validation(format!("config key '{key}': {e}"))),
            None => Ok(default),
        }
    }
}

pub fn parse_list<T: FromStr>(raw: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("'{s}': {e}")))
        .collect()
}

/// `start:stop:step` (inclusive, tolerant to rounding) or a comma list.
pub fn parse_grid(raw: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = raw.split(':').collect();
    if parts.len() != 3 {
        return parse_list(raw);
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}")))
        .collect::<Result<_, _>>()?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if step.is_nan() || stop.is_nan() || step <= 0.0 || stop < start {
        return Err(format!("grid '{raw}' needs step > 0 and stop >= start"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    if count > 1_000_000 {
        return Err(format!("grid '{raw}' has more than 10^6 points"));
    }
    Ok((0..=count).map(|i| start + step * i as f64).collect())
}

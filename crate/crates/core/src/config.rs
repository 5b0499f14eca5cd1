//! Plain-text configuration: `key = value` lines grouped under `[section]`
//! headers. Keys before the first header belong to the unnamed section `""`.
//! `#` starts a comment. Vectors are written as comma-separated numbers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Parsed configuration with typed accessors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut cfg = Config::default();
        let mut section = String::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {}: unterminated section header", no + 1)))?;
                section = name.trim().to_string();
                cfg.sections.entry(section.clone()).or_default();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", no + 1)));
            }
            let slot = cfg.sections.entry(section.clone()).or_default();
            if slot.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", no + 1)));
            }
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Config::parse(&text)
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl ToString) {
        self.sections.entry(section.to_string()).or_default().insert(key.to_string(), value.to_string());
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section).and_then(|s| s.get(key)).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("[{section}] {key} = {v}: cannot parse value"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    pub fn get_vec3(&self, section: &str, key: &str) -> Result<Option<Vector3<f64>>> {
        let Some(v) = self.raw(section, key) else { return Ok(None) };
        let parts: Vec<f64> = v
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("[{section}] {key} = {v}: expected three numbers")))?;
        if parts.len() != 3 {
            return Err(Error::Config(format!("[{section}] {key} = {v}: expected three numbers")));
        }
        Ok(Some(Vector3::new(parts[0], parts[1], parts[2])))
    }

    /// Fails on any key outside `allowed`, given as `(section, key)` pairs.
    pub fn check_keys(&self, allowed: &[(&str, &str)]) -> Result<()> {
        for (s, keys) in &self.sections {
            for k in keys.keys() {
                if !allowed.iter().any(|(a, b)| a == s && b == k) {
                    return Err(Error::Config(format!("unknown key `{k}` in section [{s}]")));
                }
            }
        }
        Ok(())
    }

    /// Overlays every entry of `other` on `self`.
    pub fn merge(&mut self, other: &Config) {
        for (s, keys) in &other.sections {
            for (k, v) in keys {
                self.set(s, k, v);
            }
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(top) = self.sections.get("") {
            for (k, v) in top {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        for (s, keys) in self.sections.iter().filter(|(s, _)| !s.is_empty()) {
            let _ = writeln!(out, "\n[{s}]");
            for (k, v) in keys {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }
}

/// Formats a vector in the config syntax.
pub fn format_vec3(v: &Vector3<f64>) -> String {
    format!("{:?}, {:?}, {:?}", v[0], v[1], v[2])
}

//! Flat `key = value` configuration with command-line overrides.
//!
//! Lines are `namespace.key = value`; `#` starts a comment. Lists are
//! comma separated, lists of vectors are separated by `;`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Namespaces a key may live in. The bare key `seed` is also accepted.
pub const NAMESPACES: &[&str] = &[
    "input", "plane", "project", "problem", "basis", "solve", "uniqueness", "quadform", "stratify", "mms", "output",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
            kv.set(k.trim(), v.trim())?;
        }
        Ok(kv)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let ns = key.split('.').next().unwrap_or("");
        if key != "seed" && (!key.contains('.') || !NAMESPACES.contains(&ns)) {
            return Err(Error::Config(format!(
                "unknown key {key:?}; keys look like <namespace>.<name> with namespace one of {NAMESPACES:?}"
            )));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> BTreeSet<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    fn parse_as<T: FromStr>(key: &str, s: &str) -> Result<T> {
        s.trim()
            .parse()
            .map_err(|_| Error::Config(format!("{key}: cannot parse {s:?}")))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key).map(|s| Self::parse_as(key, s)).transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.raw(key)
            .map(|s| s.split(',').filter(|p| !p.trim().is_empty()).map(|p| Self::parse_as(key, p)).collect())
            .transpose()
    }

    pub fn array<T: FromStr + Copy, const N: usize>(&self, key: &str, default: [T; N]) -> Result<[T; N]> {
        match self.list::<T>(key)? {
            None => Ok(default),
            Some(v) if v.len() == N => Ok(std::array::from_fn(|i| v[i])),
            Some(v) => Err(Error::Config(format!("{key}: expected {N} values, got {}", v.len()))),
        }
    }

    /// `;`-separated list of comma-separated vectors.
    pub fn vectors(&self, key: &str) -> Result<Vec<Vec<f64>>> {
        let Some(s) = self.raw(key) else {
            return Ok(Vec::new());
        };
        s.split(';')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.split(',').map(|x| Self::parse_as(key, x)).collect())
            .collect()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).filter(|s| !s.is_empty()).map(PathBuf::from)
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.raw(key) {
            None => Ok(false),
            Some("true" | "yes" | "1" | "on") => Ok(true),
            Some("false" | "no" | "0" | "off") => Ok(false),
            Some(other) => Err(Error::Config(format!("{key}: expected a boolean, got {other:?}"))),
        }
    }
}

/// Checks that a value is strictly positive and finite.
pub fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("{key} must be positive, got {v}")))
    }
}

pub fn nonnegative(key: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("{key} must be >= 0, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_lists_and_overrides() {
        let mut kv = KeyValues::parse("# run\nsolve.nu = 0.1 # viscosity\nbasis.modes=8, 6\n\nstratify.directions = 1,0,0; 0,0.6,0.8\n").unwrap();
        assert_eq!(kv.get::<f64>("solve.nu").unwrap(), Some(0.1));
        assert_eq!(kv.array::<usize, 2>("basis.modes", [1, 1]).unwrap(), [8, 6]);
        assert_eq!(kv.vectors("stratify.directions").unwrap(), vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.6, 0.8]]);
        kv.apply_override("solve.nu=0.5").unwrap();
        assert_eq!(kv.get_or("solve.nu", 0.0).unwrap(), 0.5);
        assert_eq!(kv.get_or("solve.dt", 0.01).unwrap(), 0.01);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(KeyValues::parse("solve.nu 0.1").is_err());
        assert!(KeyValues::parse("bogus.key = 1").is_err());
        assert!(KeyValues::parse("nu = 1").is_err());
        let kv = KeyValues::parse("solve.nu = abc\nbasis.modes = 1,2,3").unwrap();
        assert!(kv.get::<f64>("solve.nu").is_err());
        assert!(kv.array::<usize, 2>("basis.modes", [1, 1]).is_err());
        assert!(positive("solve.dt", 0.0).is_err());
        assert!(nonnegative("stratify.eps", -1.0).is_err());
    }
}

//! Run configuration: command-line flags over an optional TOML file over defaults.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Comma-separated numbers on the command line; an array (or a single
/// number) in TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ListRepr<T>", into = "Vec<T>")]
pub struct List<T: Clone>(pub Vec<T>);

#[derive(Deserialize)]
#[serde(untagged)]
enum ListRepr<T> {
    Many(Vec<T>),
    One(T),
}

impl<T: Clone> From<ListRepr<T>> for List<T> {
    fn from(r: ListRepr<T>) -> Self {
        match r {
            ListRepr::Many(v) => List(v),
            ListRepr::One(x) => List(vec![x]),
        }
    }
}

impl<T: Clone> From<List<T>> for Vec<T> {
    fn from(l: List<T>) -> Self {
        l.0
    }
}

impl<T: Clone + FromStr> FromStr for List<T>
where
    T::Err: fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<T>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<Result<Vec<T>, String>>()
            .map(List)
    }
}

/// Values resolved for one run, echoed into the manifest.
pub struct Resolver {
    file: toml::Table,
    used: BTreeSet<String>,
    resolved: Map<String, Value>,
}

impl Resolver {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        Ok(Self {
            file,
            used: BTreeSet::new(),
            resolved: Map::new(),
        })
    }

    /// Flag if given, else the config-file entry, else `None`.
    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: DeserializeOwned + Serialize,
    {
        self.used.insert(key.to_string());
        let v = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(x) => Some(
                    x.clone()
                        .try_into::<T>()
                        .map_err(|e| anyhow!("config key `{key}`: {e}"))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &v {
            self.resolved.insert(key.to_string(), serde_json::to_value(v)?);
        }
        Ok(v)
    }

    pub fn or<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: DeserializeOwned + Serialize,
    {
        match self.optional(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.resolved.insert(key.to_string(), serde_json::to_value(&default)?);
                Ok(default)
            }
        }
    }

    pub fn require<T>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T: DeserializeOwned + Serialize,
    {
        self.optional(key, flag)?
            .ok_or_else(|| anyhow!("missing required setting `{key}` (flag --{key} or config key)"))
    }

    /// Fails on config-file keys no command consumed.
    pub fn check_unused(&self) -> Result<()> {
        let unknown: Vec<&String> = self.file.keys().filter(|k| !self.used.contains(*k)).collect();
        if !unknown.is_empty() {
            bail!("unknown config keys: {unknown:?}");
        }
        Ok(())
    }

    pub fn resolved(&self) -> &Map<String, Value> {
        &self.resolved
    }

    /// Resolved settings as a TOML document accepted by `--config`.
    pub fn to_toml(&self) -> Result<String> {
        let v: toml::Value = serde_json::from_value(Value::Object(self.resolved.clone()))?;
        Ok(toml::to_string(&v)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolver(text: &str) -> Resolver {
        Resolver {
            file: text.parse().unwrap(),
            used: BTreeSet::new(),
            resolved: Map::new(),
        }
    }

    #[test]
    fn flags_override_file_over_defaults() {
        let mut r = resolver("hbar = 2.0\nmass = 3.0\n");
        assert_eq!(r.or("hbar", Some(0.5), 1.0).unwrap(), 0.5);
        assert_eq!(r.or("mass", None, 1.0).unwrap(), 3.0);
        assert_eq!(r.or("k", None::<usize>, 5).unwrap(), 5);
        assert_eq!(r.resolved()["hbar"], Value::from(0.5));
        r.check_unused().unwrap();
    }

    #[test]
    fn lists_parse_from_both_sources() {
        let l: List<f64> = "1.0, -2".parse().unwrap();
        assert_eq!(l.0, vec![1.0, -2.0]);
        let mut r = resolver("at = [0.5, 1.5]\nN = 64\n");
        let at: List<f64> = r.require("at", None).unwrap();
        assert_eq!(at.0, vec![0.5, 1.5]);
        let n: List<usize> = r.require("N", None).unwrap();
        assert_eq!(n.0, vec![64]);
        assert!("1,x".parse::<List<f64>>().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut r = resolver("chart = \"polar2\"\ntypo = 1\n");
        let _: Option<String> = r.optional("chart", None).unwrap();
        assert!(r.check_unused().is_err());
    }

    #[test]
    fn resolved_settings_render_as_toml() {
        let mut r = resolver("");
        r.or("chart", None, "polar2".to_string()).unwrap();
        r.or("at", None, List(vec![1.0, 0.0])).unwrap();
        let t = r.to_toml().unwrap();
        let back: toml::Table = t.parse().unwrap();
        assert_eq!(back["chart"].as_str(), Some("polar2"));
    }
}

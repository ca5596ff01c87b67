//! Run configuration: `key = value` files overlaid by command-line flags.
//!
//! Every key a command reads is recorded with its resolved value, so the
//! recorded set can be fed back through `--config` to repeat the run.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gsae::{Error, Result};

#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    flags: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
    inputs: Vec<(String, PathBuf)>,
}

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_config(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "{}:{}: expected `key = value`",
                path.display(),
                i + 1
            ))
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!(
                "{}:{}: empty key",
                path.display(),
                i + 1
            )));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!(
                "{}:{}: key `{k}` set twice",
                path.display(),
                i + 1
            )));
        }
    }
    Ok(out)
}

pub fn parse_kv(s: &str) -> std::result::Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("`{s}` is not key=value"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse()
                .map_err(|_| Error::Config(format!("bad list element `{v}` in `{s}`")))
        })
        .collect()
}

impl Settings {
    pub fn new(config: Option<&Path>, flags: Vec<(String, String)>) -> Result<Self> {
        let file = match config {
            Some(p) => parse_config(&fs::read_to_string(p)?, p)?,
            None => BTreeMap::new(),
        };
        Ok(Settings {
            file,
            flags: flags.into_iter().collect(),
            ..Default::default()
        })
    }

    fn lookup(&self, key: &str) -> Option<String> {
        self.flags.get(key).or_else(|| self.file.get(key)).cloned()
    }

    fn parse<T: FromStr>(key: &str, raw: &str) -> Result<T>
    where
        T::Err: Display,
    {
        raw.parse()
            .map_err(|e| Error::Config(format!("{key} = {raw}: {e}")))
    }

    pub fn get<T: FromStr + Display>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        let v = match self.lookup(key) {
            Some(raw) => Self::parse(key, &raw)?,
            None => default,
        };
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    /// Like [`get`](Self::get) but keeps the value's spelling, for keys whose
    /// type has no `Display`.
    pub fn get_str(&mut self, key: &str, default: &str) -> String {
        let v = self.lookup(key).unwrap_or_else(|| default.to_string());
        self.resolved.insert(key.to_string(), v.clone());
        v
    }

    pub fn opt<T: FromStr + Display>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.lookup(key) {
            Some(raw) if !raw.is_empty() => {
                let v: T = Self::parse(key, &raw)?;
                self.resolved.insert(key.to_string(), v.to_string());
                Ok(Some(v))
            }
            _ => Ok(None),
        }
    }

    pub fn required<T: FromStr + Display>(&mut self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.opt(key)?
            .ok_or_else(|| Error::Config(format!("missing required setting `{key}`")))
    }

    /// An input file; its checksum goes into the manifest.
    pub fn input(&mut self, key: &str) -> Result<PathBuf> {
        self.opt_input(key)?
            .ok_or_else(|| Error::Config(format!("missing required input `{key}`")))
    }

    pub fn opt_input(&mut self, key: &str) -> Result<Option<PathBuf>> {
        let Some(raw) = self.lookup(key).filter(|v| !v.is_empty()) else {
            return Ok(None);
        };
        let path = PathBuf::from(&raw);
        if !path.is_file() {
            return Err(Error::Config(format!(
                "{key}: `{raw}` is not a readable file"
            )));
        }
        self.resolved.insert(key.to_string(), raw);
        self.inputs.push((key.to_string(), path.clone()));
        Ok(Some(path))
    }

    /// Rejects keys that no part of the command read.
    pub fn check_unused(&self) -> Result<()> {
        let given: BTreeSet<&String> = self.flags.keys().chain(self.file.keys()).collect();
        let unused: Vec<&str> = given
            .into_iter()
            .filter(|k| !self.resolved.contains_key(*k))
            .map(String::as_str)
            .collect();
        if unused.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "unknown setting(s) for this command: {}",
                unused.join(", ")
            )))
        }
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }

    pub fn inputs(&self) -> &[(String, PathBuf)] {
        &self.inputs
    }

    /// The resolved settings in the format [`parse_config`] reads.
    pub fn to_config_text(&self) -> String {
        self.resolved
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        fs::write(&p, "# comment\nlearning_rate = 0.1\npatience=4\n").unwrap();
        let mut s = Settings::new(Some(&p), vec![("patience".into(), "7".into())]).unwrap();
        assert_eq!(s.get("learning_rate", 0.05).unwrap(), 0.1);
        assert_eq!(s.get("patience", 3usize).unwrap(), 7);
        assert_eq!(s.get("momentum", 0.9).unwrap(), 0.9);
        s.check_unused().unwrap();
        assert_eq!(
            s.to_config_text(),
            "learning_rate = 0.1\nmomentum = 0.9\npatience = 7\n"
        );
    }

    #[test]
    fn resolved_text_round_trips() {
        let mut s = Settings::new(None, vec![]).unwrap();
        s.get("a", 0.1 + 0.2).unwrap();
        s.get_str("variant", "superset");
        let p = Path::new("x");
        let back = parse_config(&s.to_config_text(), p).unwrap();
        let mut t = Settings {
            file: back,
            ..Default::default()
        };
        assert_eq!(t.get("a", 0.0).unwrap(), 0.1 + 0.2);
        assert_eq!(t.get_str("variant", ""), "superset");
    }

    #[test]
    fn unknown_and_malformed_keys_are_errors() {
        let mut s = Settings::new(None, vec![("typo".into(), "1".into())]).unwrap();
        s.get("seed", 1u64).unwrap();
        assert!(matches!(s.check_unused(), Err(Error::Config(_))));
        let mut s = Settings::new(None, vec![("patience".into(), "x".into())]).unwrap();
        assert!(s.get("patience", 3usize).is_err());
        assert!(parse_config("novalue\n", Path::new("c")).is_err());
        assert!(parse_config("a=1\na=2\n", Path::new("c")).is_err());
        assert_eq!(parse_list::<usize>("400, 100").unwrap(), vec![400, 100]);
        assert!(parse_list::<usize>("").unwrap().is_empty());
    }
}

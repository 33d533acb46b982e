//! Parser for compact `kind:key=value,key=value` specifications used on the
//! command line.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub(crate) fn split_spec(s: &str) -> Result<(&str, &str)> {
    let s = s.trim();
    Ok(match s.split_once(':') {
        Some((kind, rest)) => (kind.trim(), rest.trim()),
        None => (s, ""),
    })
}

pub(crate) struct Params {
    entries: BTreeMap<String, String>,
}

impl Params {
    pub(crate) fn parse(s: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got '{item}'")))?;
            if entries.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("duplicate key '{}'", k.trim())));
            }
        }
        Ok(Self { entries })
    }

    pub(crate) fn take_str(&mut self, key: &str) -> Result<String> {
        self.entries
            .remove(key)
            .ok_or_else(|| Error::Config(format!("missing parameter '{key}'")))
    }

    pub(crate) fn take_f64(&mut self, key: &str) -> Result<f64> {
        let raw = self.take_str(key)?;
        raw.parse()
            .map_err(|_| Error::Config(format!("parameter '{key}' is not a number: '{raw}'")))
    }

    pub(crate) fn take_f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        if self.entries.contains_key(key) {
            self.take_f64(key)
        } else {
            Ok(default)
        }
    }

    pub(crate) fn finish(self) -> Result<()> {
        match self.entries.keys().next() {
            None => Ok(()),
            Some(k) => Err(Error::Config(format!("unknown parameter '{k}'"))),
        }
    }
}

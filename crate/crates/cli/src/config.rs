//! Flag / config-file resolution. Every value a command uses goes through
//! [`Settings`], which records it for the run manifest.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::CliError;

pub struct Settings {
    file: toml::Table,
    resolved: BTreeMap<String, serde_json::Value>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Validation(format!("config {}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        Ok(Settings { file, resolved: BTreeMap::new() })
    }

    fn from_file<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.file.get(key) {
            Some(v) => v
                .clone()
                .try_into()
                .map(Some)
                .map_err(|e| CliError::Validation(format!("config key {key:?}: {e}"))),
            None => Ok(None),
        }
    }

    fn record<T: Serialize>(&mut self, key: &str, value: &T) {
        let v = serde_json::to_value(value).expect("settings serialize");
        self.resolved.insert(key.to_owned(), v);
    }

    /// Flag, else config file, else `default`.
    pub fn get<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError> {
        let v = match flag {
            Some(v) => v,
            None => self.from_file(key)?.unwrap_or(default),
        };
        self.record(key, &v);
        Ok(v)
    }

    pub fn optional<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.from_file(key)?,
        };
        if let Some(v) = &v {
            self.record(key, v);
        }
        Ok(v)
    }

    pub fn require<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError> {
        self.optional(key, flag)?
            .ok_or_else(|| CliError::Validation(format!("missing required option --{key}")))
    }

    /// List flag: empty on the command line means "not given".
    pub fn list<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Vec<T>, default: Vec<T>) -> Result<Vec<T>, CliError> {
        let flag = if flag.is_empty() { None } else { Some(flag) };
        self.get(key, flag, default)
    }

    pub fn resolved(&self) -> &BTreeMap<String, serde_json::Value> {
        &self.resolved
    }
}

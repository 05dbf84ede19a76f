//! Optional TOML run configuration. Keys mirror the long flag names with
//! `-` replaced by `_`; a flag given on the command line wins over the file.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::Failure;

#[rustfmt::skip]
const KNOWN_KEYS: &[&str] = &[
    "seed", "log_level", "k", "min_bytes", "max_bytes", "wp", "C", "msg_wp", "patch_wp", "min_df",
    "max_vocab", "l2_normalize", "no_stem", "no_split", "stopwords", "min_token_len", "max_tokens",
    "epochs", "tol", "folds", "sweep", "min_precision", "positives", "negatives",
];

#[derive(Debug, Default)]
pub struct FileConfig {
    table: toml::Table,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?;
        if let Some(key) = table.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(Failure::Usage(format!(
                "config {}: unknown key `{key}`",
                path.display()
            )));
        }
        Ok(FileConfig { table })
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, Failure> {
        match self.table.get(key) {
            None => Ok(None),
            Some(value) => value
                .clone()
                .try_into()
                .map(Some)
                .map_err(|e| Failure::Usage(format!("config key `{key}`: {e}"))),
        }
    }
}

/// Collects the resolved value of every setting a command used, for
/// embedding in its output.
#[derive(Debug, Default)]
pub struct Resolver<'a> {
    file: Option<&'a FileConfig>,
    pub resolved: Map<String, Value>,
}

impl<'a> Resolver<'a> {
    pub fn new(file: &'a FileConfig) -> Self {
        Resolver {
            file: Some(file),
            resolved: Map::new(),
        }
    }

    pub fn pick<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, Failure>
    where
        T: DeserializeOwned + serde::Serialize,
    {
        let value = match flag {
            Some(v) => v,
            None => match self.file.map(|f| f.get(key)).transpose()?.flatten() {
                Some(v) => v,
                None => default,
            },
        };
        self.record(key, &value);
        Ok(value)
    }

    /// Like [`Resolver::pick`] for settings without a default.
    pub fn pick_opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, Failure>
    where
        T: DeserializeOwned + serde::Serialize,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => self.file.map(|f| f.get(key)).transpose()?.flatten(),
        };
        self.record(key, &value);
        Ok(value)
    }

    /// Boolean switches: set by the flag or by `true` in the file.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool, Failure> {
        let on = flag
            || self
                .file
                .map(|f| f.get::<bool>(key))
                .transpose()?
                .flatten()
                .unwrap_or(false);
        self.record(key, &on);
        Ok(on)
    }

    pub fn record<T: serde::Serialize>(&mut self, key: &str, value: &T) {
        let value = serde_json::to_value(value).expect("settings serialize");
        self.resolved.insert(key.to_string(), value);
    }
}

//! Layered model configuration: built-in defaults, then a flat TOML file,
//! then command-line overrides. Keys are `ModelConfig` field names.

use std::path::Path;

use ptmf_core::ModelConfig;
use serde_json::{Map, Value};

use crate::CliError;

pub struct Layers {
    values: Map<String, Value>,
}

impl Layers {
    pub fn new() -> Self {
        let Value::Object(values) = serde_json::to_value(ModelConfig::default()).expect("config serialises") else {
            unreachable!("ModelConfig serialises to an object")
        };
        Self { values }
    }

    fn set(&mut self, key: &str, value: Value, origin: &str) -> Result<(), CliError> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => Err(CliError::Invalid(format!("unknown config key {key:?} in {origin}"))),
        }
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        let origin = path.display().to_string();
        for (k, v) in table {
            if v.is_table() || v.is_array() {
                return Err(CliError::Invalid(format!("{origin}: key {k:?} must be a plain value")));
            }
            let json = serde_json::to_value(v).map_err(|e| CliError::Invalid(e.to_string()))?;
            self.set(&k, json, &origin)?;
        }
        Ok(())
    }

    /// `key=value` with the value read as a TOML literal, falling back to a
    /// bare string.
    pub fn apply_assignment(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Invalid(format!("--set expects KEY=VALUE, got {assignment:?}")))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = match format!("v = {raw}").parse::<toml::Table>() {
            Ok(mut t) => serde_json::to_value(t.remove("v").expect("parsed key")).map_err(|e| CliError::Invalid(e.to_string()))?,
            Err(_) => Value::String(raw.to_owned()),
        };
        self.set(key, value, "--set")
    }

    pub fn apply<T: serde::Serialize>(&mut self, key: &str, value: T) -> Result<(), CliError> {
        let v = serde_json::to_value(value).map_err(|e| CliError::Invalid(e.to_string()))?;
        self.set(key, v, "command line")
    }

    pub fn resolve(self) -> Result<ModelConfig, CliError> {
        let cfg: ModelConfig =
            serde_json::from_value(Value::Object(self.values)).map_err(|e| CliError::Invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

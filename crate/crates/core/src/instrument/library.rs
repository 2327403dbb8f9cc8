//! Named amplifier noise specifications loaded from a TOML file.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::NoiseSourceSpec;
use crate::error::{invalid, FesError, Result};

/// Environment variable naming a replacement library file.
pub const COMPONENT_DB_ENV: &str = "FES_COMPONENT_DB";

const BUILTIN: &str = include_str!("../../data/amplifiers.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplifierEntry {
    #[serde(default)]
    pub description: String,
    /// `(frequency, amplitude density)` points, V/sqrt(Hz).
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLibrary {
    entries: BTreeMap<String, AmplifierEntry>,
}

impl ComponentLibrary {
    /// The library shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_toml_str(BUILTIN).expect("bundled amplifier library is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let entries: BTreeMap<String, AmplifierEntry> =
            toml::from_str(text).map_err(|e| FesError::Format(format!("amplifier library: {e}")))?;
        for (name, entry) in &entries {
            NoiseSourceSpec::from_table(entry.points.clone())
                .map_err(|e| invalid(format!("amplifier `{name}`: {e}")))?;
        }
        Ok(ComponentLibrary { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// The file named by `FES_COMPONENT_DB` if set, else the built-in library.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(COMPONENT_DB_ENV) {
            Some(path) if !path.is_empty() => Self::load(Path::new(&path)),
            _ => Ok(Self::builtin()),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn entry(&self, name: &str) -> Option<&AmplifierEntry> {
        self.entries.get(name)
    }

    /// Voltage-noise spec of the named amplifier.
    pub fn get(&self, name: &str) -> Result<NoiseSourceSpec> {
        let entry = self.entries.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.names().collect();
            invalid(format!("unknown amplifier `{name}` (known: {})", known.join(", ")))
        })?;
        NoiseSourceSpec::from_table(entry.points.clone())
    }
}

//! Optional TOML config file. Each `[command]` table supplies defaults for
//! that command's flags; flags given on the command line win.

use std::path::Path;

use anyhow::Result;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::invalid;

pub struct Config {
    table: toml::Table,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        let table: toml::Table =
            text.parse().map_err(|e| invalid(format!("config {}: {e}", path.display())))?;
        if let Some((key, _)) = table.iter().find(|(_, v)| !v.is_table()) {
            return Err(invalid(format!("config key `{key}` must sit inside a [command] table")));
        }
        Ok(Self { table })
    }

    /// Overlays the command-line values of `args` on the `[section]` table.
    /// Unset options and `false` switches defer to the file.
    pub fn apply<T: Serialize + DeserializeOwned>(config: Option<&Self>, section: &str, args: T) -> Result<T> {
        let Some(config) = config else { return Ok(args) };
        let Some(file) = config.table.get(section).and_then(|v| v.as_table()) else { return Ok(args) };

        let Value::Object(cli) = serde_json::to_value(&args)? else { unreachable!("args serialize to a map") };
        let mut merged = Map::new();
        for (key, value) in file {
            let key = key.replace('_', "-");
            if !cli.contains_key(&key) {
                return Err(invalid(format!("config [{section}]: unknown key `{key}`")));
            }
            merged.insert(key, serde_json::to_value(value)?);
        }
        for (key, value) in cli {
            if !matches!(value, Value::Null | Value::Bool(false)) {
                merged.insert(key, value);
            }
        }
        serde_json::from_value(Value::Object(merged)).map_err(|e| invalid(format!("config [{section}]: {e}")))
    }
}

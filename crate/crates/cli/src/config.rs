//! `--config` files: TOML documents whose keys are the long flag names of
//! the subcommand. Flags given on the command line win.

use std::path::Path;

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::invalid;

/// Overlay the flags that were set onto the config file and decode the
/// result. Keys outside `allowed` are rejected.
pub fn resolve<T>(flags: &T, config: Option<&Path>, allowed: &[String]) -> anyhow::Result<T>
where
    T: Serialize + DeserializeOwned,
{
    let mut merged = match config {
        Some(path) => read(path, allowed)?,
        None => Map::new(),
    };
    let Value::Object(set) = serde_json::to_value(flags)? else {
        unreachable!("option structs serialize to objects")
    };
    merged.extend(set.into_iter().filter(|(_, v)| !v.is_null()));
    let source = config.map_or_else(|| "flags".to_string(), |p| p.display().to_string());
    serde_json::from_value(Value::Object(merged)).map_err(|e| invalid(format!("{source}: {e}")))
}

fn read(path: &Path, allowed: &[String]) -> anyhow::Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| invalid(format!("{}: {}", path.display(), e.message())))?;
    if let Some(key) = table.keys().find(|k| !allowed.contains(k)) {
        return Err(invalid(format!("{}: unknown key `{key}`", path.display())));
    }
    match serde_json::to_value(table)? {
        Value::Object(map) => Ok(map),
        _ => unreachable!("a TOML table is an object"),
    }
}

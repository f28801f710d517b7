//! Layered configuration: defaults, then a JSON config file, then flags.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use xaiunc_core::{Error, Result};

/// Reads a config file as a flat JSON object.
pub fn read_config_file(path: &Path) -> Result<Map<String, Value>> {
    let text = fs::read_to_string(path)?;
    match serde_json::from_str::<Value>(&text)? {
        Value::Object(map) => Ok(map),
        _ => Err(Error::InvalidConfig(format!(
            "{}: config must be a JSON object",
            path.display()
        ))),
    }
}

/// Serializes `C::default()`, overlays `file` then the non-null `flags`, and deserializes
/// the result. Keys that `C` does not know are rejected.
pub fn resolve<C>(file: &Map<String, Value>, flags: Value) -> Result<C>
where
    C: Default + Serialize + DeserializeOwned,
{
    let Value::Object(mut merged) = serde_json::to_value(C::default())? else {
        unreachable!("configs serialize as objects");
    };
    for key in file.keys() {
        if !merged.contains_key(key) {
            return Err(Error::InvalidConfig(format!("unknown config key `{key}`")));
        }
    }
    for (k, v) in file {
        merged.insert(k.clone(), v.clone());
    }
    if let Value::Object(flags) = flags {
        for (k, v) in flags {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| Error::InvalidConfig(e.to_string()))
}

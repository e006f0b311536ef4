//! Layering of defaults, flags and config files.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::Failure;

/// Recursively overlays `top` onto `base`. Objects merge key by key; anything
/// else in `top` replaces what `base` had.
pub fn overlay(base: &mut Value, top: &Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

pub fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

/// `base` (defaults with flags applied) overlaid with the config file, then
/// parsed as `T`. Parse errors name the offending field.
pub fn layered<T: Serialize + DeserializeOwned>(base: &T, file: Option<&Value>) -> Result<T, Failure> {
    let mut v = serde_json::to_value(base).expect("config serializes");
    if let Some(f) = file {
        overlay(&mut v, f);
    }
    serde_json::from_value(v).map_err(|e| Failure::Usage(format!("config: {e}")))
}

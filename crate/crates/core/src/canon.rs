//! Canonical JSON output: sorted object keys, two-space indentation, trailing newline.

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn to_string<T: Serialize>(value: &T) -> String {
    // serde_json::Value keeps objects in a BTreeMap, which sorts keys.
    let v = serde_json::to_value(value).expect("serializable value");
    let mut s = serde_json::to_string_pretty(&v).expect("json value");
    s.push('\n');
    s
}

/// Round to a fixed number of decimals so report floats are stable across platforms.
pub fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Deserialize with the failing field path in the error.
pub fn from_str<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Parse {
            path,
            message: e.into_inner().to_string(),
        }
    })
}

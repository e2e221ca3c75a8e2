//! Config-file defaults.
//!
//! `--config file.json` supplies a flat JSON object of default values keyed
//! by flag name (`{"tau": 2.0, "n-trees": 300, "model": "cox"}`).  Explicit
//! command-line flags always win; the file only fills gaps.  Values must
//! have the JSON type the flag expects.

use std::path::Path;

use serde_json::Value;

use crate::{usage, CResult};

/// The parsed (possibly absent) config file.
pub struct Overlay {
    values: serde_json::Map<String, Value>,
}

impl Overlay {
    pub fn empty() -> Overlay {
        Overlay {
            values: serde_json::Map::new(),
        }
    }

    pub fn load(path: &Path) -> CResult<Overlay> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| usage(format!("config {} is not valid JSON: {e}", path.display())))?;
        match value {
            Value::Object(values) => Ok(Overlay { values }),
            _ => Err(usage(format!(
                "config {} must be a JSON object of flag defaults",
                path.display()
            ))),
        }
    }

    fn get<T, F>(&self, key: &str, kind: &str, convert: F) -> CResult<Option<T>>
    where
        F: FnOnce(&Value) -> Option<T>,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => convert(v)
                .map(Some)
                .ok_or_else(|| usage(format!("config key {key:?} must be {kind}, got {v}"))),
        }
    }

    pub fn u64(&self, key: &str) -> CResult<Option<u64>> {
        self.get(key, "an unsigned integer", Value::as_u64)
    }

    pub fn usize(&self, key: &str) -> CResult<Option<usize>> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    pub fn f64(&self, key: &str) -> CResult<Option<f64>> {
        self.get(key, "a number", Value::as_f64)
    }

    pub fn bool(&self, key: &str) -> CResult<Option<bool>> {
        self.get(key, "a boolean", Value::as_bool)
    }

    pub fn string(&self, key: &str) -> CResult<Option<String>> {
        self.get(key, "a string", |v| v.as_str().map(String::from))
    }

    /// A list of strings, or a single string (treated as a one-element
    /// list).
    pub fn strings(&self, key: &str) -> CResult<Option<Vec<String>>> {
        self.get(key, "a string or array of strings", |v| match v {
            Value::String(s) => Some(vec![s.clone()]),
            Value::Array(items) => items
                .iter()
                .map(|i| i.as_str().map(String::from))
                .collect::<Option<Vec<_>>>(),
            _ => None,
        })
    }

    /// A list of unsigned integers, or a single one.
    pub fn u64s(&self, key: &str) -> CResult<Option<Vec<u64>>> {
        self.get(key, "an integer or array of integers", |v| match v {
            Value::Number(_) => v.as_u64().map(|n| vec![n]),
            Value::Array(items) => items
                .iter()
                .map(Value::as_u64)
                .collect::<Option<Vec<_>>>(),
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_reads_types_and_rejects_mismatches() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(
            &path,
            r#"{"tau": 2.5, "n-trees": 40, "model": "cox", "scenario": [1, 3], "flag": true}"#,
        )
        .unwrap();
        let overlay = Overlay::load(&path).unwrap();
        assert_eq!(overlay.f64("tau").unwrap(), Some(2.5));
        assert_eq!(overlay.usize("n-trees").unwrap(), Some(40));
        assert_eq!(overlay.string("model").unwrap(), Some("cox".into()));
        assert_eq!(overlay.u64s("scenario").unwrap(), Some(vec![1, 3]));
        assert_eq!(overlay.bool("flag").unwrap(), Some(true));
        assert_eq!(overlay.f64("absent").unwrap(), None);
        assert!(overlay.u64("tau").is_err());
        assert!(overlay.string("n-trees").is_err());

        std::fs::write(&path, "[1, 2]").unwrap();
        assert!(Overlay::load(&path).is_err());
    }
}

//! Layered run configuration: defaults < config file < command-line flags.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// A problem with how the run was requested. Maps to exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Reads a config file. JSON when the extension is `.json` or the first
/// non-blank character is `{`, otherwise `key = value` lines with `#` comments.
pub fn read_config_file(path: &Path) -> anyhow::Result<Map<String, Value>> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    if is_json {
        match serde_json::from_str::<Value>(&text) {
            Ok(Value::Object(map)) => Ok(map),
            Ok(_) => Err(usage(format!("{}: top level must be an object", path.display()))),
            Err(e) => Err(usage(format!("{}: {e}", path.display()))),
        }
    } else {
        parse_key_values(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }
}

pub fn parse_key_values(text: &str) -> Result<Map<String, Value>, String> {
    let mut map = Map::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(format!("line {}: expected key = value", lineno + 1));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(format!("line {}: empty key", lineno + 1));
        }
        if map.insert(key.to_string(), scalar(value.trim())).is_some() {
            return Err(format!("line {}: duplicate key {key}", lineno + 1));
        }
    }
    Ok(map)
}

/// JSON literal if it parses as one, a list for comma-separated numbers,
/// otherwise a string.
fn scalar(s: &str) -> Value {
    if let Ok(v) = serde_json::from_str::<Value>(s) {
        return v;
    }
    if s.contains(',') {
        let parts: Option<Vec<Value>> = s
            .split(',')
            .map(|p| serde_json::from_str::<serde_json::Number>(p.trim()).ok().map(Value::Number))
            .collect();
        if let Some(parts) = parts {
            return Value::Array(parts);
        }
    }
    Value::String(s.to_string())
}

/// Overlays `flags` (absent options skipped) on the config file and
/// deserializes into `T`, whose defaults fill the remaining keys.
pub fn resolve<T, F>(file: Option<&Path>, flags: &F) -> anyhow::Result<T>
where
    T: DeserializeOwned,
    F: Serialize,
{
    let mut map = match file {
        Some(path) => read_config_file(path)?,
        None => Map::new(),
    };
    let Value::Object(flag_map) = serde_json::to_value(flags)? else {
        unreachable!("flag structs serialize to objects");
    };
    for (k, v) in flag_map {
        if !v.is_null() {
            map.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(map)).map_err(|e| usage(format!("invalid configuration: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_values_parse_types() {
        let map = parse_key_values("# comment\np = 2.5\nm_list = 5, 10,15\nf = poly:1,0,2.0\nname = x\n").unwrap();
        assert_eq!(map["p"], Value::from(2.5));
        assert_eq!(map["m_list"], serde_json::json!([5, 10, 15]));
        assert_eq!(map["f"], Value::from("poly:1,0,2.0"));
        assert_eq!(map["name"], Value::from("x"));
    }

    #[test]
    fn bad_lines_are_rejected() {
        assert!(parse_key_values("p 2").is_err());
        assert!(parse_key_values("p = 2\np = 3").is_err());
        assert!(parse_key_values(" = 3").is_err());
    }

    #[derive(serde::Deserialize, Debug)]
    #[serde(deny_unknown_fields)]
    struct Demo {
        p: f64,
        #[serde(default)]
        m: usize,
    }

    #[derive(Serialize)]
    struct DemoFlags {
        p: Option<f64>,
        m: Option<usize>,
    }

    #[test]
    fn flags_override_file_and_unknown_keys_fail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.conf");
        fs::write(&path, "p = 3\nm = 4\n").unwrap();
        let d: Demo = resolve(Some(&path), &DemoFlags { p: Some(2.0), m: None }).unwrap();
        assert_eq!((d.p, d.m), (2.0, 4));

        fs::write(&path, "p = 3\nq = 4\n").unwrap();
        let err = resolve::<Demo, _>(Some(&path), &DemoFlags { p: None, m: None }).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
        let err = resolve::<Demo, _>(None, &DemoFlags { p: None, m: None }).unwrap_err();
        assert!(err.to_string().contains("missing field"));
    }
}

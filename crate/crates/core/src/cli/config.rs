//! Layered configuration: built-in defaults, then an optional JSON file,
//! then command-line flags.

use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use super::CliError;

fn as_object(v: Value, what: &str) -> Result<Map<String, Value>> {
    match v {
        Value::Object(m) => Ok(m),
        _ => Err(CliError::Usage(format!("{what} must be a JSON object")).into()),
    }
}

/// Overlay `file` and then `flags` onto `defaults`. Keys unknown to the
/// resolved type are rejected.
pub fn resolve<C, F>(defaults: &C, file: Option<&Path>, flags: &F) -> Result<C>
where
    C: Serialize + DeserializeOwned,
    F: Serialize,
{
    let mut merged = as_object(serde_json::to_value(defaults)?, "defaults")?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config file {}", path.display()))?;
        let v: Value =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))?;
        for (k, v) in as_object(v, "config file")? {
            if !merged.contains_key(&k) {
                return Err(CliError::Usage(format!("unknown config key `{k}`")).into());
            }
            merged.insert(k, v);
        }
    }
    for (k, v) in as_object(serde_json::to_value(flags)?, "flags")? {
        if !v.is_null() {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| CliError::Usage(format!("invalid configuration: {e}")).into())
}

/// Print the resolved config and write it to `sidecar`, creating its
/// directory so the artifacts beside it can be written too.
pub fn record<C: Serialize>(command: &str, config: &C, sidecar: &Path) -> Result<()> {
    let doc = serde_json::json!({ "command": command, "config": config });
    let text = serde_json::to_string_pretty(&doc)?;
    println!("{text}");
    if let Some(dir) = sidecar.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(sidecar, text + "\n").with_context(|| format!("writing {}", sidecar.display()))?;
    Ok(())
}

/// `<path>.config.json`
pub fn sidecar_for(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".config.json");
    s.into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, Debug, PartialEq)]
    #[serde(deny_unknown_fields)]
    struct Conf {
        a: u32,
        b: String,
    }

    #[derive(Serialize)]
    struct Flags {
        a: Option<u32>,
        b: Option<String>,
    }

    #[test]
    fn flags_win_over_file_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.json");
        std::fs::write(&file, r#"{"a": 2, "b": "file"}"#).unwrap();
        let d = Conf {
            a: 1,
            b: "default".into(),
        };
        let flags = Flags { a: Some(3), b: None };
        let c = resolve(&d, Some(&file), &flags).unwrap();
        assert_eq!(c, Conf { a: 3, b: "file".into() });
        let none = Flags { a: None, b: None };
        assert_eq!(resolve(&d, None, &none).unwrap(), d);
    }

    #[test]
    fn unknown_file_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.json");
        std::fs::write(&file, r#"{"zzz": 2}"#).unwrap();
        let d = Conf { a: 1, b: "x".into() };
        assert!(resolve(&d, Some(&file), &Flags { a: None, b: None }).is_err());
    }
}

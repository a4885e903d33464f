//! Config snapshots: one TOML section per run, keys named after long flags.

use std::collections::HashSet;
use std::ffi::OsString;
use std::path::Path;

use toml::Value;

use super::Command;
use crate::{Error, Result};

pub const SNAPSHOT_FILE: &str = "config.toml";

pub(crate) fn render(cmd: &Command) -> Result<String> {
    toml::to_string(cmd).map_err(|e| Error::Serde(e.to_string()))
}

fn flag_value(key: &str, v: &Value) -> Result<String> {
    Ok(match v {
        Value::String(s) => s.clone(),
        Value::Integer(i) => i.to_string(),
        Value::Float(f) => f.to_string(),
        other => return Err(Error::invalid(format!("key {key:?}: unsupported value {other}"))),
    })
}

/// Rebuilds the argument vector a snapshot was produced from. Keys named by
/// a `--flag` in `overrides` are dropped from the snapshot and the overrides
/// are appended, so repeatable flags are replaced rather than extended.
pub fn args_from_snapshot(path: &Path, overrides: &[String]) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let table: toml::Table =
        text.parse().map_err(|e: toml::de::Error| Error::invalid(format!("{}: {e}", path.display())))?;
    let mut sections = table.iter();
    let (name, body) = match (sections.next(), sections.next()) {
        (Some(s), None) => s,
        _ => return Err(Error::invalid(format!("{}: expected exactly one command section", path.display()))),
    };
    let body = body
        .as_table()
        .ok_or_else(|| Error::invalid(format!("{}: [{name}] is not a section", path.display())))?;

    let overridden: HashSet<&str> = overrides
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a))
        .collect();
    let mut args: Vec<OsString> = vec!["immuno".into(), name.into()];
    for (key, v) in body.iter().filter(|(k, _)| !overridden.contains(k.as_str())) {
        match v {
            Value::Boolean(true) => args.push(format!("--{key}").into()),
            Value::Boolean(false) => {}
            Value::Array(items) => {
                for item in items {
                    args.push(format!("--{key}={}", flag_value(key, item)?).into());
                }
            }
            v => args.push(format!("--{key}={}", flag_value(key, v)?).into()),
        }
    }
    args.extend(overrides.iter().map(OsString::from));
    Ok(args)
}

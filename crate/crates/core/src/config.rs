//! Configuration files and command-line overrides.
//!
//! A config file is TOML holding a full [`SweepSpec`]: top-level sweep lists
//! plus `[plant]`, `[controller]`, `[trajectory]`, `[planner]` tables and one
//! `[[perception]]` table per system. Every key is optional; missing keys take
//! their defaults and unknown keys are rejected. Overrides are `path=value`
//! strings with dotted paths (`plant.push_limit=25`,
//! `perception.0.camera.translation=[-50, 0, 120]`); values are TOML literals,
//! and anything that does not parse as one is taken as a bare string.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;
use toml::{Table, Value};

use crate::bench::SweepSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {origin}: line {line}, column {column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("config: override '{arg}': {message}")]
    Override { arg: String, message: String },
    #[error("config: {0}")]
    Invalid(String),
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn parse_error(origin: &str, text: &str, err: toml::de::Error) -> ConfigError {
    let (line, column) = err.span().map_or((1, 1), |s| line_col(text, s.start));
    ConfigError::Parse {
        origin: origin.to_string(),
        line,
        column,
        message: err.message().trim().to_string(),
    }
}

/// Parse a config file's text. `origin` names the source in error messages.
pub fn parse_sweep(text: &str, origin: &str) -> Result<SweepSpec, ConfigError> {
    toml::from_str(text).map_err(|e| parse_error(origin, text, e))
}

pub fn load_sweep(path: &Path) -> Result<SweepSpec, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_sweep(&text, &path.display().to_string())
}

/// Parse the right-hand side of an override.
fn override_value(raw: &str) -> Value {
    let raw = raw.trim();
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_path(root: &mut Value, path: &[&str], value: Value) -> Result<(), String> {
    let Some((last, parents)) = path.split_last() else {
        return Err("empty key".into());
    };
    let mut node = root;
    for (depth, seg) in parents.iter().enumerate() {
        let here = path[..=depth].join(".");
        node = match node {
            Value::Table(t) => t.entry(seg.to_string()).or_insert_with(|| Value::Table(Table::new())),
            Value::Array(a) => {
                let i: usize = seg.parse().map_err(|_| format!("'{here}': expected an array index"))?;
                let len = a.len();
                a.get_mut(i).ok_or_else(|| format!("'{here}': index out of range (length {len})"))?
            }
            _ => return Err(format!("'{}' is not a table", path[..depth].join("."))),
        };
    }
    match node {
        Value::Table(t) => {
            t.insert(last.to_string(), value);
        }
        Value::Array(a) => {
            let i: usize = last.parse().map_err(|_| format!("'{}': expected an array index", path.join(".")))?;
            let len = a.len();
            *a.get_mut(i).ok_or_else(|| format!("'{}': index out of range (length {len})", path.join(".")))? = value;
        }
        _ => return Err(format!("'{}' is not a table", parents.join("."))),
    }
    Ok(())
}

/// Apply `path=value` overrides in order. Each is checked on its own, so an
/// error names the offending argument.
pub fn apply_overrides(spec: &SweepSpec, overrides: &[String]) -> Result<SweepSpec, ConfigError> {
    let mut current = spec.clone();
    for arg in overrides {
        let fail = |message: String| ConfigError::Override {
            arg: arg.clone(),
            message,
        };
        let (key, raw) = arg.split_once('=').ok_or_else(|| fail("expected key=value".into()))?;
        let path: Vec<&str> = key.trim().split('.').collect();
        if path.iter().any(|s| s.is_empty()) {
            return Err(fail("empty key segment".into()));
        }
        let mut tree = Value::try_from(&current).map_err(|e| fail(e.to_string()))?;
        set_path(&mut tree, &path, override_value(raw)).map_err(fail)?;
        current = tree.try_into().map_err(|e: toml::de::Error| fail(e.message().trim().to_string()))?;
    }
    Ok(current)
}

/// Load an optional config file, apply overrides and validate the result.
pub fn resolve(path: Option<&Path>, overrides: &[String]) -> Result<SweepSpec, ConfigError> {
    let base = match path {
        Some(p) => load_sweep(p)?,
        None => SweepSpec::default(),
    };
    let spec = apply_overrides(&base, overrides)?;
    spec.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    spec.trajectory.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    spec.plant.validate().map_err(ConfigError::Invalid)?;
    spec.controller.validate().map_err(ConfigError::Invalid)?;
    Ok(spec)
}

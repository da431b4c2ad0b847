//! Run summaries as JSON, plus a validator for the bundled schema.
//!
//! The validator covers the subset of JSON Schema the bundled document uses:
//! `type` (single or list), `required`, `properties`, `items`, `enum`,
//! `minimum` and local `$ref`s into `$defs`.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::engine::RunSummary;
use crate::error::{Error, Result};

pub const SUMMARY_SCHEMA: &str = include_str!("../../schema/summary.schema.json");

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_summary(summary: &RunSummary, path: &Path) -> Result<()> {
    write_json(summary, path)
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Checks a summary document against the bundled schema. Returns every
/// violation as `path: message`.
pub fn validate_summary(doc: &Value) -> std::result::Result<(), Vec<String>> {
    let schema: Value = serde_json::from_str(SUMMARY_SCHEMA).expect("bundled schema is valid JSON");
    let mut errors = Vec::new();
    check(doc, &schema, &schema, "$", &mut errors);
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

fn type_matches(v: &Value, ty: &str) -> bool {
    match ty {
        "null" => v.is_null(),
        "boolean" => v.is_boolean(),
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "number" => v.is_number(),
        "integer" => v.as_i64().is_some() || v.as_u64().is_some(),
        _ => false,
    }
}

fn check(v: &Value, schema: &Value, root: &Value, path: &str, errors: &mut Vec<String>) {
    if let Some(target) = schema.get("$ref").and_then(Value::as_str) {
        match target.strip_prefix("#/$defs/").and_then(|name| root.get("$defs")?.get(name)) {
            Some(def) => check(v, def, root, path, errors),
            None => errors.push(format!("{path}: unresolvable reference {target}")),
        }
        return;
    }
    if let Some(ty) = schema.get("type") {
        let ok = match ty {
            Value::String(t) => type_matches(v, t),
            Value::Array(ts) => ts.iter().filter_map(Value::as_str).any(|t| type_matches(v, t)),
            _ => true,
        };
        if !ok {
            errors.push(format!("{path}: expected type {ty}, found {v}"));
            return;
        }
    }
    if let Some(Value::Array(options)) = schema.get("enum") {
        if !options.contains(v) {
            errors.push(format!("{path}: {v} is not an allowed value"));
        }
    }
    if let (Some(min), Some(x)) = (schema.get("minimum").and_then(Value::as_f64), v.as_f64()) {
        if x < min {
            errors.push(format!("{path}: {x} is below the minimum {min}"));
        }
    }
    if let Value::Object(map) = v {
        if let Some(Value::Array(req)) = schema.get("required") {
            for key in req.iter().filter_map(Value::as_str) {
                if !map.contains_key(key) {
                    errors.push(format!("{path}: missing required field `{key}`"));
                }
            }
        }
        if let Some(Value::Object(props)) = schema.get("properties") {
            for (key, sub) in props {
                if let Some(child) = map.get(key) {
                    check(child, sub, root, &format!("{path}.{key}"), errors);
                }
            }
        }
    }
    if let (Value::Array(items), Some(sub)) = (v, schema.get("items")) {
        for (i, item) in items.iter().enumerate() {
            check(item, sub, root, &format!("{path}[{i}]"), errors);
        }
    }
}

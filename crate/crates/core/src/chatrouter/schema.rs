//! The subset of JSON Schema used by function declarations: `type`,
//! `properties`, `required`, `additionalProperties` (boolean), `items`,
//! `minItems`, `maxItems`, `minimum`, `maximum`, `minLength`, `description`.

use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemaError {
    #[error("invalid schema at {path}: {message}")]
    InvalidSchema { path: String, message: String },
    #[error("{path}: {message}")]
    Violation { path: String, message: String },
}

const TYPES: [&str; 6] = ["object", "array", "string", "integer", "number", "boolean"];
const KEYWORDS: [&str; 10] = [
    "type",
    "properties",
    "required",
    "additionalProperties",
    "items",
    "minItems",
    "maxItems",
    "minimum",
    "maximum",
    "minLength",
];

fn bad_schema(path: &str, message: impl Into<String>) -> SchemaError {
    SchemaError::InvalidSchema {
        path: path.to_string(),
        message: message.into(),
    }
}

fn violation(path: &str, message: impl Into<String>) -> SchemaError {
    SchemaError::Violation {
        path: path.to_string(),
        message: message.into(),
    }
}

/// Checks that `schema` only uses the supported subset, consistently.
pub fn check_schema(schema: &Value) -> Result<(), SchemaError> {
    check_at(schema, "$")
}

fn check_at(schema: &Value, path: &str) -> Result<(), SchemaError> {
    let obj = schema
        .as_object()
        .ok_or_else(|| bad_schema(path, "schema must be an object"))?;
    for key in obj.keys() {
        if key != "description" && !KEYWORDS.contains(&key.as_str()) {
            return Err(bad_schema(path, format!("unsupported keyword {key:?}")));
        }
    }
    let ty = obj
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| bad_schema(path, "missing string \"type\""))?;
    if !TYPES.contains(&ty) {
        return Err(bad_schema(path, format!("unknown type {ty:?}")));
    }
    if let Some(d) = obj.get("description") {
        if !d.is_string() {
            return Err(bad_schema(path, "description must be a string"));
        }
    }
    let allowed: &[&str] = match ty {
        "object" => &["properties", "required", "additionalProperties"],
        "array" => &["items", "minItems", "maxItems"],
        "string" => &["minLength"],
        "integer" | "number" => &["minimum", "maximum"],
        _ => &[],
    };
    for key in obj.keys() {
        if !matches!(key.as_str(), "type" | "description") && !allowed.contains(&key.as_str()) {
            return Err(bad_schema(
                path,
                format!("{key:?} does not apply to type {ty}"),
            ));
        }
    }
    match ty {
        "object" => check_object_schema(obj, path),
        "array" => {
            let items = obj
                .get("items")
                .ok_or_else(|| bad_schema(path, "array schema needs \"items\""))?;
            for key in ["minItems", "maxItems"] {
                if obj.get(key).is_some_and(|v| v.as_u64().is_none()) {
                    return Err(bad_schema(
                        path,
                        format!("{key} must be a non-negative integer"),
                    ));
                }
            }
            check_at(items, &format!("{path}.items"))
        }
        "string" => match obj.get("minLength") {
            Some(v) if v.as_u64().is_none() => {
                Err(bad_schema(path, "minLength must be a non-negative integer"))
            }
            _ => Ok(()),
        },
        "integer" | "number" => {
            for key in ["minimum", "maximum"] {
                if obj.get(key).is_some_and(|v| !v.is_number()) {
                    return Err(bad_schema(path, format!("{key} must be a number")));
                }
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

fn check_object_schema(obj: &Map<String, Value>, path: &str) -> Result<(), SchemaError> {
    let empty = Map::new();
    let props = match obj.get("properties") {
        None => &empty,
        Some(Value::Object(p)) => p,
        Some(_) => return Err(bad_schema(path, "properties must be an object")),
    };
    for (name, sub) in props {
        check_at(sub, &format!("{path}.{name}"))?;
    }
    if let Some(req) = obj.get("required") {
        let req = req
            .as_array()
            .ok_or_else(|| bad_schema(path, "required must be an array"))?;
        for r in req {
            let name = r
                .as_str()
                .ok_or_else(|| bad_schema(path, "required entries must be strings"))?;
            if !props.contains_key(name) {
                return Err(bad_schema(
                    path,
                    format!("required property {name:?} is not declared"),
                ));
            }
        }
    }
    if obj
        .get("additionalProperties")
        .is_some_and(|v| !v.is_boolean())
    {
        return Err(bad_schema(path, "additionalProperties must be a boolean"));
    }
    Ok(())
}

/// Validates `value` against a schema that passed [`check_schema`].
pub fn validate(schema: &Value, value: &Value) -> Result<(), SchemaError> {
    validate_at(schema, value, "$")
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_i64() || n.is_u64() => "integer",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn validate_at(schema: &Value, value: &Value, path: &str) -> Result<(), SchemaError> {
    let ty = schema
        .get("type")
        .and_then(Value::as_str)
        .unwrap_or("object");
    let actual = type_name(value);
    let type_ok = actual == ty || (ty == "number" && actual == "integer");
    if !type_ok {
        return Err(violation(path, format!("expected {ty}, got {actual}")));
    }
    match value {
        Value::Object(obj) => {
            let empty = Map::new();
            let props = schema
                .get("properties")
                .and_then(Value::as_object)
                .unwrap_or(&empty);
            let required = schema.get("required").and_then(Value::as_array);
            for name in required.into_iter().flatten().filter_map(Value::as_str) {
                if !obj.contains_key(name) {
                    return Err(violation(
                        path,
                        format!("missing required property {name:?}"),
                    ));
                }
            }
            let closed = schema.get("additionalProperties") == Some(&Value::Bool(false));
            for (name, v) in obj {
                match props.get(name) {
                    Some(sub) => validate_at(sub, v, &format!("{path}.{name}"))?,
                    None if closed => {
                        return Err(violation(path, format!("unexpected property {name:?}")))
                    }
                    None => {}
                }
            }
        }
        Value::Array(items) => {
            let n = items.len() as u64;
            if let Some(min) = schema.get("minItems").and_then(Value::as_u64) {
                if n < min {
                    return Err(violation(
                        path,
                        format!("needs at least {min} items, got {n}"),
                    ));
                }
            }
            if let Some(max) = schema.get("maxItems").and_then(Value::as_u64) {
                if n > max {
                    return Err(violation(
                        path,
                        format!("allows at most {max} items, got {n}"),
                    ));
                }
            }
            if let Some(item_schema) = schema.get("items") {
                for (i, item) in items.iter().enumerate() {
                    validate_at(item_schema, item, &format!("{path}[{i}]"))?;
                }
            }
        }
        Value::String(s) => {
            if let Some(min) = schema.get("minLength").and_then(Value::as_u64) {
                if (s.chars().count() as u64) < min {
                    return Err(violation(
                        path,
                        format!("must have at least {min} characters"),
                    ));
                }
            }
        }
        Value::Number(n) => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            if let Some(min) = schema.get("minimum").and_then(Value::as_f64) {
                if x < min {
                    return Err(violation(path, format!("must be at least {min}, got {n}")));
                }
            }
            if let Some(max) = schema.get("maximum").and_then(Value::as_f64) {
                if x > max {
                    return Err(violation(path, format!("must be at most {max}, got {n}")));
                }
            }
        }
        _ => {}
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn knn() -> Value {
        json!({
            "type": "object",
            "properties": {
                "topic_index": {"type": "integer", "minimum": 0},
                "query": {"type": "string", "minLength": 1},
                "k": {"type": "integer", "minimum": 1, "maximum": 50}
            },
            "required": ["topic_index", "query"],
            "additionalProperties": false
        })
    }

    #[test]
    fn accepts_valid_arguments() {
        check_schema(&knn()).unwrap();
        validate(
            &knn(),
            &json!({"topic_index": 1, "query": "moon landing", "k": 5}),
        )
        .unwrap();
        validate(&knn(), &json!({"topic_index": 0, "query": "x"})).unwrap();
    }

    #[test]
    fn reports_each_violation() {
        let s = knn();
        let cases = [
            (
                json!({"query": "x"}),
                "missing required property \"topic_index\"",
            ),
            (
                json!({"topic_index": -1, "query": "x"}),
                "$.topic_index: must be at least 0",
            ),
            (
                json!({"topic_index": 1.5, "query": "x"}),
                "expected integer, got number",
            ),
            (
                json!({"topic_index": "1", "query": "x"}),
                "expected integer, got string",
            ),
            (
                json!({"topic_index": 1, "query": ""}),
                "at least 1 characters",
            ),
            (
                json!({"topic_index": 1, "query": "x", "k": 99}),
                "at most 50",
            ),
            (
                json!({"topic_index": 1, "query": "x", "extra": 1}),
                "unexpected property \"extra\"",
            ),
            (json!([1]), "expected object, got array"),
        ];
        for (value, needle) in cases {
            let err = validate(&s, &value).unwrap_err().to_string();
            assert!(err.contains(needle), "{err} lacks {needle}");
        }
    }

    #[test]
    fn arrays() {
        let s = json!({"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2});
        check_schema(&s).unwrap();
        validate(&s, &json!([1, 2, 5])).unwrap();
        assert!(validate(&s, &json!([1])).is_err());
        let err = validate(&s, &json!([1, -2])).unwrap_err().to_string();
        assert!(err.starts_with("$[1]"), "{err}");
    }

    #[test]
    fn number_accepts_integers() {
        let s = json!({"type": "number", "minimum": 0.5});
        validate(&s, &json!(1)).unwrap();
        assert!(validate(&s, &json!(0.25)).is_err());
    }

    #[test]
    fn rejects_malformed_schemas() {
        for s in [
            json!("object"),
            json!({"properties": {}}),
            json!({"type": "tuple"}),
            json!({"type": "object", "required": ["a"]}),
            json!({"type": "object", "additionalProperties": {}}),
            json!({"type": "string", "minimum": 1}),
            json!({"type": "array"}),
            json!({"type": "object", "pattern": "x"}),
            json!({"type": "object", "properties": {"a": {"type": "integer", "minimum": "0"}}}),
        ] {
            assert!(
                matches!(check_schema(&s), Err(SchemaError::InvalidSchema { .. })),
                "{s}"
            );
        }
    }
}

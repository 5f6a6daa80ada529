//! Flat `key = value` text with `[a, b, c]` list values.
//!
//! ```text
//! # comment
//! optimizer = adam
//! beta2 = [0.999, 0.9]   # trailing comment
//! ```

use crate::error::{LabError, Result};

/// Right-hand side of one entry.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    /// A bare value.
    Scalar(String),
    /// A bracketed, comma-separated list (possibly empty).
    List(Vec<String>),
}

/// One `key = value` line.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    /// 1-based line number.
    pub line: usize,
    /// Key.
    pub key: String,
    /// Value.
    pub value: Value,
}

/// Parse `text`; `source_name` is used in error messages.
pub fn parse(text: &str, source_name: &str) -> Result<Vec<Entry>> {
    let err = |line: usize, message: String| LabError::Spec {
        source_name: source_name.to_string(),
        line,
        message,
    };
    let mut out: Vec<Entry> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, rhs)) = body.split_once('=') else {
            return Err(err(line, format!("expected `key = value`, found `{body}`")));
        };
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(err(line, format!("invalid key `{key}`")));
        }
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(err(line, format!("duplicate key `{key}` (first set on line {})", prev.line)));
        }
        let rhs = rhs.trim();
        let value = if let Some(inner) = rhs.strip_prefix('[') {
            let Some(inner) = inner.strip_suffix(']') else {
                return Err(err(line, format!("unterminated list for `{key}`")));
            };
            let inner = inner.trim();
            if inner.is_empty() {
                Value::List(Vec::new())
            } else {
                let items: Vec<String> = inner.split(',').map(|s| s.trim().to_string()).collect();
                if items.iter().any(String::is_empty) {
                    return Err(err(line, format!("empty item in list for `{key}`")));
                }
                Value::List(items)
            }
        } else if rhs.is_empty() {
            return Err(err(line, format!("missing value for `{key}`")));
        } else {
            Value::Scalar(rhs.to_string())
        };
        out.push(Entry {
            line,
            key: key.to_string(),
            value,
        });
    }
    Ok(out)
}

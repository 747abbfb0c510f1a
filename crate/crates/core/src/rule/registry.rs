//! Rules with identity and the JSON registry format.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::Expr;
use super::parser::{parse, ParseError};
use super::typecheck::{typecheck, Diagnostic};
use super::value::Schema;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RuleKey {
    pub id: String,
    pub version: u32,
}

impl RuleKey {
    pub fn new(id: &str, version: u32) -> Self {
        RuleKey { id: id.to_string(), version }
    }
}

impl fmt::Display for RuleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.id, self.version)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub id: String,
    pub version: u32,
    pub active: bool,
    pub expression: Expr,
}

impl Rule {
    pub fn new(id: &str, version: u32, expression: Expr) -> Self {
        Rule { id: id.to_string(), version, active: true, expression }
    }

    pub fn parse(id: &str, version: u32, text: &str) -> Result<Self, ParseError> {
        Ok(Rule::new(id, version, parse(text)?))
    }

    pub fn key(&self) -> RuleKey {
        RuleKey::new(&self.id, self.version)
    }

    pub fn text(&self) -> String {
        self.expression.to_string()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RuleEntry {
    id: String,
    version: u32,
    active: bool,
    expression: String,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("registry is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("rule {key}: {source}")]
    Parse { key: RuleKey, source: ParseError },
    #[error("rule {key} has version 0; versions start at 1")]
    ZeroVersion { key: RuleKey },
    #[error("rule {0} appears more than once")]
    Duplicate(RuleKey),
    #[error("rule {key} does not typecheck: {}", .diagnostics.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Type { key: RuleKey, diagnostics: Vec<Diagnostic> },
}

/// Parses a registry document, rejecting duplicate (id, version) pairs.
pub fn rules_from_json(text: &str) -> Result<Vec<Rule>, RegistryError> {
    let entries: Vec<RuleEntry> = serde_json::from_str(text)?;
    let mut seen = BTreeSet::new();
    let mut rules = Vec::with_capacity(entries.len());
    for entry in entries {
        let key = RuleKey::new(&entry.id, entry.version);
        if entry.version == 0 {
            return Err(RegistryError::ZeroVersion { key });
        }
        if !seen.insert(key.clone()) {
            return Err(RegistryError::Duplicate(key));
        }
        let expression = parse(&entry.expression).map_err(|source| RegistryError::Parse { key, source })?;
        rules.push(Rule { id: entry.id, version: entry.version, active: entry.active, expression });
    }
    Ok(rules)
}

pub fn rules_to_json(rules: &[Rule]) -> String {
    let entries: Vec<RuleEntry> = rules
        .iter()
        .map(|r| RuleEntry { id: r.id.clone(), version: r.version, active: r.active, expression: r.text() })
        .collect();
    let mut out = serde_json::to_string_pretty(&entries).expect("rule entries serialise");
    out.push('\n');
    out
}

pub fn load_rules(path: &Path) -> Result<Vec<Rule>, RegistryError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| RegistryError::Io { path: path.display().to_string(), source })?;
    rules_from_json(&text)
}

/// Checks every rule against the schema.
pub fn check_rules(rules: &[Rule], schema: &Schema) -> Result<(), RegistryError> {
    for rule in rules {
        let diagnostics = typecheck(&rule.expression, schema);
        if !diagnostics.is_empty() {
            return Err(RegistryError::Type { key: rule.key(), diagnostics });
        }
    }
    Ok(())
}

pub fn schema_from_json(text: &str) -> Result<Schema, serde_json::Error> {
    serde_json::from_str(text)
}

pub fn schema_to_json(schema: &Schema) -> String {
    let mut out = serde_json::to_string_pretty(schema).expect("schema serialises");
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_roundtrip() {
        let text = r#"[
            {"id": "V09", "version": 1, "active": true, "expression": "A = 1 implies B in ['x', 'y']"},
            {"id": "V09", "version": 2, "active": false, "expression": "A = 2 implies B = 'z'"}
        ]"#;
        let rules = rules_from_json(text).unwrap();
        assert_eq!(rules.len(), 2);
        assert!(!rules[1].active);
        assert_eq!(rules_from_json(&rules_to_json(&rules)).unwrap(), rules);
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let text = r#"[
            {"id": "V1", "version": 1, "active": true, "expression": "A = 1"},
            {"id": "V1", "version": 1, "active": true, "expression": "A = 2"}
        ]"#;
        assert!(matches!(rules_from_json(text), Err(RegistryError::Duplicate(_))));
    }

    #[test]
    fn parse_errors_name_the_rule() {
        let text = r#"[{"id": "V7", "version": 3, "active": true, "expression": "A = "}]"#;
        let err = rules_from_json(text).unwrap_err();
        assert!(err.to_string().starts_with("rule V7/3"), "{err}");
    }

    #[test]
    fn schema_file_format() {
        let schema = schema_from_json(r#"{"A": "integer", "d": "date", "t": "text", "x": "decimal"}"#).unwrap();
        assert_eq!(schema.len(), 4);
        assert_eq!(schema_from_json(&schema_to_json(&schema)).unwrap(), schema);
        assert!(schema_from_json(r#"{"A": "bool"}"#).is_err());
    }
}

//! Policy-free reference engine: a thin wrapper over categorisation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::rule::{categorize, Record, Rule, Schema, TriState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RefOutcome {
    Result(TriState),
    EvalError(String),
}

impl fmt::Display for RefOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RefOutcome::Result(t) => write!(f, "{t}"),
            RefOutcome::EvalError(m) => write!(f, "EvalError({m})"),
        }
    }
}

/// Categorises `record` under the rule's expression. The active flag is ignored.
pub fn validate(rule: &Rule, record: &Record) -> RefOutcome {
    match categorize(&rule.expression, record) {
        Ok(t) => RefOutcome::Result(t),
        Err(e) => RefOutcome::EvalError(e.to_string()),
    }
}

/// Reads a raw test object through the schema before validating; unreadable values become evaluation errors.
pub fn validate_json(rule: &Rule, test: &serde_json::Map<String, serde_json::Value>, schema: &Schema) -> RefOutcome {
    match Record::from_json(test, schema) {
        Ok(record) => validate(rule, &record),
        Err(e) => RefOutcome::EvalError(e.to_string()),
    }
}

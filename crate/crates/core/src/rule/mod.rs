//! The rule expression language: values, syntax, parsing, typing and evaluation.

mod ast;
mod eval;
mod parser;
mod registry;
mod typecheck;
mod value;

pub use ast::{CmpOp, Expr, InclusionOp, Literal, StringOp, Term};
pub use eval::{categorize, evaluate, EvalError, TriState};
pub use parser::{parse, ParseError};
pub use registry::{
    check_rules, load_rules, rules_from_json, rules_to_json, schema_from_json, schema_to_json, RegistryError, Rule,
    RuleKey,
};
pub use typecheck::{typecheck, Diagnostic};
pub use value::{
    parse_date_lenient, parse_iso_date, CoerceError, DatePattern, DatePatternError, DateStyle, Record, Schema, Value,
    ValueType, LENIENT_DATE_PATTERNS,
};

//! Two-valued evaluation and the tri-state categorisation built on it.
//!
//! Null operands make every comparison, inclusion and string predicate false.
//! `and`, `or` and `implies` short-circuit left to right.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{CmpOp, Expr, InclusionOp, StringOp, Term};
use super::value::{Record, Value, ValueType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TriState {
    Pass,
    Fail,
    NotApplied,
}

impl TriState {
    pub const ALL: [TriState; 3] = [TriState::Pass, TriState::Fail, TriState::NotApplied];

    pub fn as_str(self) -> &'static str {
        match self {
            TriState::Pass => "Pass",
            TriState::Fail => "Fail",
            TriState::NotApplied => "NotApplied",
        }
    }
}

impl fmt::Display for TriState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("substring({var}, {start}, {end}) out of range for a value of length {len}")]
    SubstringOutOfRange { var: String, start: u32, end: u32, len: usize },
    #[error("`{var}` holds a {found} value where text is required")]
    NotText { var: String, found: ValueType },
    #[error("cannot compare {left} with {right} in `{context}`")]
    Incomparable { context: String, left: ValueType, right: ValueType },
}

pub fn evaluate(expr: &Expr, record: &Record) -> Result<bool, EvalError> {
    match expr {
        Expr::And(a, b) => Ok(evaluate(a, record)? && evaluate(b, record)?),
        Expr::Or(a, b) => Ok(evaluate(a, record)? || evaluate(b, record)?),
        Expr::Not(a) => Ok(!evaluate(a, record)?),
        Expr::Implies(a, b) => Ok(!evaluate(a, record)? || evaluate(b, record)?),
        Expr::Compare { op, lhs, rhs } => {
            let l = term_value(lhs, record)?;
            let r = term_value(rhs, record)?;
            if l.is_null() || r.is_null() {
                return Ok(false);
            }
            let ord = ordering(&l, &r, expr)?;
            Ok(match op {
                CmpOp::Eq => ord == Ordering::Equal,
                CmpOp::Ne => ord != Ordering::Equal,
                CmpOp::Lt => ord == Ordering::Less,
                CmpOp::Le => ord != Ordering::Greater,
                CmpOp::Gt => ord == Ordering::Greater,
                CmpOp::Ge => ord != Ordering::Less,
            })
        }
        Expr::Inclusion { op, term, list } => {
            let v = term_value(term, record)?;
            if v.is_null() {
                return Ok(false);
            }
            let mut found = false;
            for lit in list {
                if ordering(&v, &lit.value(), expr)? == Ordering::Equal {
                    found = true;
                    break;
                }
            }
            Ok(match op {
                InclusionOp::In => found,
                InclusionOp::NotIn => !found,
            })
        }
        Expr::StringPredicate { op, var, pattern } => match record.get(var) {
            Value::Null => Ok(false),
            Value::Text(s) => Ok(match op {
                StringOp::StartsWith => s.starts_with(pattern.as_str()),
                StringOp::EndsWith => s.ends_with(pattern.as_str()),
            }),
            other => Err(EvalError::NotText { var: var.clone(), found: other.value_type().unwrap() }),
        },
    }
}

fn ordering(l: &Value, r: &Value, context: &Expr) -> Result<Ordering, EvalError> {
    l.compare(r).ok_or_else(|| EvalError::Incomparable {
        context: context.to_string(),
        left: l.value_type().unwrap_or(ValueType::Text),
        right: r.value_type().unwrap_or(ValueType::Text),
    })
}

fn term_value(term: &Term, record: &Record) -> Result<Value, EvalError> {
    match term {
        Term::Var(v) => Ok(record.get(v).clone()),
        Term::Lit(l) => Ok(l.value()),
        Term::Substring { var, start, end } => match record.get(var) {
            Value::Null => Ok(Value::Null),
            Value::Text(s) => substring(s, var, *start, *end).map(Value::Text),
            other => Err(EvalError::NotText { var: var.clone(), found: other.value_type().unwrap() }),
        },
    }
}

/// 1-based inclusive character range; anything outside `1 <= start <= end <= len` is an error.
fn substring(s: &str, var: &str, start: u32, end: u32) -> Result<String, EvalError> {
    let len = s.chars().count();
    if start == 0 || start > end || end as usize > len {
        return Err(EvalError::SubstringOutOfRange { var: var.to_string(), start, end, len });
    }
    Ok(s.chars().skip(start as usize - 1).take((end - start + 1) as usize).collect())
}

/// Tri-state outcome of a rule on a record.
///
/// With an `implies` root the left operand decides applicability; any other
/// root is always applied, so `NotApplied` cannot occur.
pub fn categorize(expr: &Expr, record: &Record) -> Result<TriState, EvalError> {
    match expr {
        Expr::Implies(lhs, rhs) => {
            if !evaluate(lhs, record)? {
                Ok(TriState::NotApplied)
            } else if evaluate(rhs, record)? {
                Ok(TriState::Pass)
            } else {
                Ok(TriState::Fail)
            }
        }
        other => Ok(if evaluate(other, record)? { TriState::Pass } else { TriState::Fail }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule::parse;

    fn rec(pairs: &[(&str, Value)]) -> Record {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn material_implication() {
        let e = parse("A = 1 implies B = 2").unwrap();
        let i = Value::Integer;
        assert!(evaluate(&e, &rec(&[("A", i(1)), ("B", i(2))])).unwrap());
        assert!(!evaluate(&e, &rec(&[("A", i(1)), ("B", i(3))])).unwrap());
        assert!(evaluate(&e, &rec(&[("A", i(0)), ("B", i(3))])).unwrap());
    }

    #[test]
    fn categorize_implication() {
        let e = parse("A = 1 implies B = 2").unwrap();
        let i = Value::Integer;
        assert_eq!(categorize(&e, &rec(&[("A", i(1)), ("B", i(2))])).unwrap(), TriState::Pass);
        assert_eq!(categorize(&e, &rec(&[("A", i(1)), ("B", i(3))])).unwrap(), TriState::Fail);
        assert_eq!(categorize(&e, &rec(&[("A", i(0)), ("B", i(3))])).unwrap(), TriState::NotApplied);
    }

    #[test]
    fn non_implication_roots_are_always_applied() {
        let e = parse("A = 1").unwrap();
        assert_eq!(categorize(&e, &rec(&[("A", Value::Integer(1))])).unwrap(), TriState::Pass);
        assert_eq!(categorize(&e, &rec(&[("A", Value::Integer(2))])).unwrap(), TriState::Fail);
        assert_eq!(categorize(&e, &Record::new()).unwrap(), TriState::Fail);
    }

    #[test]
    fn nulls_make_predicates_false() {
        let empty = Record::new();
        for text in ["A = 1", "A != 1", "A in [1]", "A notIn [1]", "startswith(A, 'x')", "substring(A, 1, 1) = 'x'"] {
            assert!(!evaluate(&parse(text).unwrap(), &empty).unwrap(), "{text}");
        }
        assert!(evaluate(&parse("not A = 1").unwrap(), &empty).unwrap());
    }

    #[test]
    fn substring_is_one_based_inclusive() {
        let r = rec(&[("t", Value::Text("8140/3".into()))]);
        assert!(evaluate(&parse("substring(t, 1, 4) = '8140'").unwrap(), &r).unwrap());
        assert!(evaluate(&parse("substring(t, 6, 6) = '3'").unwrap(), &r).unwrap());
        for text in ["substring(t, 4, 1) = 'x'", "substring(t, 0, 1) = 'x'", "substring(t, 5, 7) = 'x'"] {
            assert!(matches!(
                evaluate(&parse(text).unwrap(), &r),
                Err(EvalError::SubstringOutOfRange { .. })
            ));
        }
    }

    #[test]
    fn substring_error_example() {
        let r = rec(&[("t", Value::Text("ab".into()))]);
        assert!(evaluate(&parse("substring(t, 5, 2) = 'x'").unwrap(), &r).is_err());
    }

    #[test]
    fn comparisons_by_type() {
        let r = rec(&[
            ("n", Value::Integer(3)),
            ("x", Value::Decimal(2.5)),
            ("s", Value::Text("C50".into())),
            ("d", Value::Date(chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap())),
        ]);
        for (text, want) in [
            ("n > x", true),
            ("n = 3.0", true),
            ("s < 'C51'", true),
            ("s >= 'D'", false),
            ("d < date('2020-01-02')", true),
            ("d != date('2020-01-01')", false),
            ("n in [1, 2, 3]", true),
            ("s notIn ['C50']", false),
            ("endswith(s, '50')", true),
        ] {
            assert_eq!(evaluate(&parse(text).unwrap(), &r).unwrap(), want, "{text}");
        }
        assert!(matches!(
            evaluate(&parse("s = 1").unwrap(), &r),
            Err(EvalError::Incomparable { .. })
        ));
    }

    #[test]
    fn left_false_short_circuits_errors_on_the_right() {
        let r = rec(&[("A", Value::Integer(0)), ("t", Value::Text("a".into()))]);
        let e = parse("A = 1 implies substring(t, 3, 4) = 'x'").unwrap();
        assert_eq!(categorize(&e, &r).unwrap(), TriState::NotApplied);
    }
}

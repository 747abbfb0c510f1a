//! Straight-line truth-table oracle for rule outcomes, kept apart from the library evaluator.

use std::cmp::Ordering;

use rulediff_core::rule::{CmpOp, Expr, InclusionOp, Literal, Record, StringOp, Term, TriState, Value};

/// `None` marks an evaluation error.
pub type Outcome = Option<TriState>;

fn lit(l: &Literal) -> Value {
    match l {
        Literal::Integer(i) => Value::Integer(*i),
        Literal::Decimal(d) => Value::Decimal(*d),
        Literal::Text(s) => Value::Text(s.clone()),
        Literal::Date(d) => Value::Date(*d),
    }
}

fn num(v: &Value) -> Option<f64> {
    match v {
        Value::Integer(i) => Some(*i as f64),
        Value::Decimal(d) => Some(*d),
        _ => None,
    }
}

fn order(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Integer(x), Value::Integer(y)) => Some(x.cmp(y)),
        (Value::Text(x), Value::Text(y)) => Some(x.cmp(y)),
        (Value::Date(x), Value::Date(y)) => Some(x.cmp(y)),
        _ => num(a)?.partial_cmp(&num(b)?),
    }
}

fn term(t: &Term, r: &Record) -> Option<Value> {
    match t {
        Term::Lit(l) => Some(lit(l)),
        Term::Var(v) => Some(r.get(v).clone()),
        Term::Substring { var, start, end } => match r.get(var) {
            Value::Null => Some(Value::Null),
            Value::Text(s) => {
                let chars: Vec<char> = s.chars().collect();
                let (i, j) = (*start as usize, *end as usize);
                (i >= 1 && i <= j && j <= chars.len()).then(|| Value::Text(chars[i - 1..j].iter().collect()))
            }
            _ => None,
        },
    }
}

/// Two-valued truth, evaluating operands left to right and stopping as soon as the answer is known.
pub fn truth(e: &Expr, r: &Record) -> Option<bool> {
    Some(match e {
        Expr::And(a, b) => {
            if truth(a, r)? {
                truth(b, r)?
            } else {
                false
            }
        }
        Expr::Or(a, b) => {
            if truth(a, r)? {
                true
            } else {
                truth(b, r)?
            }
        }
        Expr::Implies(a, b) => {
            if truth(a, r)? {
                truth(b, r)?
            } else {
                true
            }
        }
        Expr::Not(a) => !truth(a, r)?,
        Expr::Compare { op, lhs, rhs } => {
            let (x, y) = (term(lhs, r)?, term(rhs, r)?);
            if x == Value::Null || y == Value::Null {
                return Some(false);
            }
            let o = order(&x, &y)?;
            match op {
                CmpOp::Eq => o.is_eq(),
                CmpOp::Ne => o.is_ne(),
                CmpOp::Lt => o.is_lt(),
                CmpOp::Le => o.is_le(),
                CmpOp::Gt => o.is_gt(),
                CmpOp::Ge => o.is_ge(),
            }
        }
        Expr::Inclusion { op, term: t, list } => {
            let x = term(t, r)?;
            if x == Value::Null {
                return Some(false);
            }
            let mut hit = false;
            for l in list {
                if order(&x, &lit(l))?.is_eq() {
                    hit = true;
                    break;
                }
            }
            hit == (*op == InclusionOp::In)
        }
        Expr::StringPredicate { op, var, pattern } => match r.get(var) {
            Value::Null => false,
            Value::Text(s) => match op {
                StringOp::StartsWith => s.starts_with(pattern.as_str()),
                StringOp::EndsWith => s.ends_with(pattern.as_str()),
            },
            _ => return None,
        },
    })
}

/// Tri-state outcome by table lookup on the truth of the operands.
pub fn outcome(e: &Expr, r: &Record) -> Outcome {
    match e {
        Expr::Implies(a, b) => {
            let left = truth(a, r)?;
            if !left {
                return Some(TriState::NotApplied);
            }
            let right = truth(b, r)?;
            Some(match (left, right) {
                (true, true) => TriState::Pass,
                _ => TriState::Fail,
            })
        }
        other => Some(if truth(other, r)? { TriState::Pass } else { TriState::Fail }),
    }
}

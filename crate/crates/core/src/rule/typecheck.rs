use std::fmt;

use super::ast::{Expr, Term};
use super::value::{Schema, ValueType};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    UnknownVariable(String),
    TypeMismatch { context: String, left: ValueType, right: ValueType },
    SubstringOnNonText { var: String, ty: ValueType },
    StringPredicateOnNonText { var: String, ty: ValueType },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::UnknownVariable(v) => write!(f, "unknown variable `{v}`"),
            Diagnostic::TypeMismatch { context, left, right } => {
                write!(f, "type mismatch in `{context}`: {left} vs {right}")
            }
            Diagnostic::SubstringOnNonText { var, ty } => {
                write!(f, "substring applied to `{var}` of type {ty}")
            }
            Diagnostic::StringPredicateOnNonText { var, ty } => {
                write!(f, "string predicate applied to `{var}` of type {ty}")
            }
        }
    }
}

/// Static checks against a schema. An empty result means the expression is well-typed.
pub fn typecheck(expr: &Expr, schema: &Schema) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    check(expr, schema, &mut out);
    out
}

fn check(expr: &Expr, schema: &Schema, out: &mut Vec<Diagnostic>) {
    match expr {
        Expr::And(a, b) | Expr::Or(a, b) | Expr::Implies(a, b) => {
            check(a, schema, out);
            check(b, schema, out);
        }
        Expr::Not(a) => check(a, schema, out),
        Expr::Compare { lhs, rhs, .. } => {
            let l = term_type(lhs, schema, out);
            let r = term_type(rhs, schema, out);
            if let (Some(l), Some(r)) = (l, r) {
                if !l.comparable_with(r) {
                    out.push(Diagnostic::TypeMismatch { context: expr.to_string(), left: l, right: r });
                }
            }
        }
        Expr::Inclusion { term, list, .. } => {
            if let Some(t) = term_type(term, schema, out) {
                for lit in list {
                    if !t.comparable_with(lit.value_type()) {
                        out.push(Diagnostic::TypeMismatch {
                            context: expr.to_string(),
                            left: t,
                            right: lit.value_type(),
                        });
                    }
                }
            }
        }
        Expr::StringPredicate { var, .. } => match schema.get(var) {
            None => out.push(Diagnostic::UnknownVariable(var.clone())),
            Some(ValueType::Text) => {}
            Some(ty) => out.push(Diagnostic::StringPredicateOnNonText { var: var.clone(), ty }),
        },
    }
}

fn term_type(term: &Term, schema: &Schema, out: &mut Vec<Diagnostic>) -> Option<ValueType> {
    match term {
        Term::Lit(l) => Some(l.value_type()),
        Term::Var(v) => {
            let ty = schema.get(v);
            if ty.is_none() {
                out.push(Diagnostic::UnknownVariable(v.clone()));
            }
            ty
        }
        Term::Substring { var, .. } => match schema.get(var) {
            None => {
                out.push(Diagnostic::UnknownVariable(var.clone()));
                None
            }
            Some(ValueType::Text) => Some(ValueType::Text),
            Some(ty) => {
                out.push(Diagnostic::SubstringOnNonText { var: var.clone(), ty });
                None
            }
        },
    }
}

//! Rule syntax tree and its canonical text form.

use std::collections::BTreeSet;
use std::fmt;

use chrono::NaiveDate;

use super::value::{Value, ValueType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InclusionOp {
    In,
    NotIn,
}

impl InclusionOp {
    pub fn keyword(self) -> &'static str {
        match self {
            InclusionOp::In => "in",
            InclusionOp::NotIn => "notIn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StringOp {
    StartsWith,
    EndsWith,
}

impl StringOp {
    pub fn keyword(self) -> &'static str {
        match self {
            StringOp::StartsWith => "startswith",
            StringOp::EndsWith => "endswith",
        }
    }
}

/// A literal constant as written in a rule.
#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Integer(i64),
    Decimal(f64),
    Text(String),
    Date(NaiveDate),
}

impl Literal {
    pub fn value(&self) -> Value {
        match self {
            Literal::Integer(i) => Value::Integer(*i),
            Literal::Decimal(d) => Value::Decimal(*d),
            Literal::Text(s) => Value::Text(s.clone()),
            Literal::Date(d) => Value::Date(*d),
        }
    }

    pub fn value_type(&self) -> ValueType {
        match self {
            Literal::Integer(_) => ValueType::Integer,
            Literal::Decimal(_) => ValueType::Decimal,
            Literal::Text(_) => ValueType::Text,
            Literal::Date(_) => ValueType::Date,
        }
    }
}

/// Operand of a comparison or inclusion.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Var(String),
    Lit(Literal),
    /// `substring(var, start, end)`, 1-based inclusive.
    Substring { var: String, start: u32, end: u32 },
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(name.to_string())
    }

    pub fn int(i: i64) -> Term {
        Term::Lit(Literal::Integer(i))
    }

    pub fn text(s: &str) -> Term {
        Term::Lit(Literal::Text(s.to_string()))
    }

    pub fn date(y: i32, m: u32, d: u32) -> Term {
        Term::Lit(Literal::Date(NaiveDate::from_ymd_opt(y, m, d).expect("valid date")))
    }

    pub fn variable(&self) -> Option<&str> {
        match self {
            Term::Var(v) | Term::Substring { var: v, .. } => Some(v),
            Term::Lit(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Implies(Box<Expr>, Box<Expr>),
    Compare { op: CmpOp, lhs: Term, rhs: Term },
    Inclusion { op: InclusionOp, term: Term, list: Vec<Literal> },
    StringPredicate { op: StringOp, var: String, pattern: String },
}

impl Expr {
    pub fn and(a: Expr, b: Expr) -> Expr {
        Expr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Expr, b: Expr) -> Expr {
        Expr::Or(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Expr) -> Expr {
        Expr::Not(Box::new(a))
    }

    pub fn implies(a: Expr, b: Expr) -> Expr {
        Expr::Implies(Box::new(a), Box::new(b))
    }

    pub fn cmp(lhs: Term, op: CmpOp, rhs: Term) -> Expr {
        Expr::Compare { op, lhs, rhs }
    }

    /// Every variable the expression reads, sorted.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_variables(&mut out);
        out
    }

    fn collect_variables(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::And(a, b) | Expr::Or(a, b) | Expr::Implies(a, b) => {
                a.collect_variables(out);
                b.collect_variables(out);
            }
            Expr::Not(a) => a.collect_variables(out),
            Expr::Compare { lhs, rhs, .. } => {
                out.extend(lhs.variable().map(str::to_string));
                out.extend(rhs.variable().map(str::to_string));
            }
            Expr::Inclusion { term, .. } => out.extend(term.variable().map(str::to_string)),
            Expr::StringPredicate { var, .. } => {
                out.insert(var.clone());
            }
        }
    }

    /// Number of nodes, counting terms and list items.
    pub fn node_count(&self) -> usize {
        match self {
            Expr::And(a, b) | Expr::Or(a, b) | Expr::Implies(a, b) => 1 + a.node_count() + b.node_count(),
            Expr::Not(a) => 1 + a.node_count(),
            Expr::Compare { .. } => 3,
            Expr::Inclusion { list, .. } => 2 + list.len(),
            Expr::StringPredicate { .. } => 1,
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Implies(..) => 0,
            Expr::Or(..) => 1,
            Expr::And(..) => 2,
            Expr::Not(..) => 3,
            _ => 4,
        }
    }
}

fn write_text_literal(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("'")?;
    for c in s.chars() {
        match c {
            '\'' => f.write_str("\\'")?,
            '\\' => f.write_str("\\\\")?,
            _ => write!(f, "{c}")?,
        }
    }
    f.write_str("'")
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Integer(i) => write!(f, "{i}"),
            Literal::Decimal(d) => {
                let s = format!("{d:?}");
                if s.contains(['.', 'e', 'E']) {
                    f.write_str(&s)
                } else {
                    write!(f, "{s}.0")
                }
            }
            Literal::Text(s) => write_text_literal(f, s),
            Literal::Date(d) => write!(f, "date('{}')", d.format("%Y-%m-%d")),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Lit(l) => write!(f, "{l}"),
            Term::Substring { var, start, end } => write!(f, "substring({var}, {start}, {end})"),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Parenthesise a child when it binds looser than its parent, or when it
        // sits on the non-associative side of an operator of equal precedence.
        let child = |f: &mut fmt::Formatter<'_>, e: &Expr, min: u8| -> fmt::Result {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Implies(a, b) => {
                child(f, a, 1)?;
                f.write_str(" implies ")?;
                child(f, b, 0)
            }
            Expr::Or(a, b) => {
                child(f, a, 1)?;
                f.write_str(" or ")?;
                child(f, b, 2)
            }
            Expr::And(a, b) => {
                child(f, a, 2)?;
                f.write_str(" and ")?;
                child(f, b, 3)
            }
            Expr::Not(a) => {
                f.write_str("not ")?;
                child(f, a, 3)
            }
            Expr::Compare { op, lhs, rhs } => write!(f, "{lhs} {} {rhs}", op.symbol()),
            Expr::Inclusion { op, term, list } => {
                write!(f, "{term} {} [", op.keyword())?;
                for (i, lit) in list.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{lit}")?;
                }
                f.write_str("]")
            }
            Expr::StringPredicate { op, var, pattern } => {
                write!(f, "{}({var}, ", op.keyword())?;
                write_text_literal(f, pattern)?;
                f.write_str(")")
            }
        }
    }
}

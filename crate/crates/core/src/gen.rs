//! Random well-typed rules over small finite variable domains.
//!
//! Used by property tests, the exhaustive oracle checks and the benchmarks.

use chrono::NaiveDate;
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::rule::{CmpOp, Expr, InclusionOp, Literal, Record, Schema, StringOp, Term, Value, ValueType};

#[derive(Debug, Clone, PartialEq)]
pub struct GenVar {
    pub name: String,
    pub ty: ValueType,
    /// Values the variable ranges over; may contain `Value::Null`.
    pub domain: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleGenerator {
    pub vars: Vec<GenVar>,
    pub max_depth: u32,
    /// Probability that the root is an implication.
    pub implies_root: f64,
}

const CMP_OPS: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

fn date(y: i32, m: u32, d: u32) -> Value {
    Value::Date(NaiveDate::from_ymd_opt(y, m, d).expect("valid date"))
}

fn literal_of(v: &Value) -> Option<Literal> {
    match v {
        Value::Text(s) => Some(Literal::Text(s.clone())),
        Value::Integer(i) => Some(Literal::Integer(*i)),
        Value::Decimal(d) => Some(Literal::Decimal(*d)),
        Value::Date(d) => Some(Literal::Date(*d)),
        Value::Null => None,
    }
}

impl RuleGenerator {
    /// Between one and four variables of random types, each with at most three values.
    pub fn random_small<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let n = rng.random_range(1..=4);
        let vars = (0..n)
            .map(|i| {
                let ty = *[ValueType::Integer, ValueType::Decimal, ValueType::Text, ValueType::Date]
                    .choose(rng)
                    .unwrap();
                let pool: Vec<Value> = match ty {
                    ValueType::Integer => vec![Value::Integer(-1), Value::Integer(0), Value::Integer(2)],
                    ValueType::Decimal => vec![Value::Decimal(0.5), Value::Decimal(1.0), Value::Decimal(2.25)],
                    ValueType::Text => vec![
                        Value::Text("C50".into()),
                        Value::Text("C5".into()),
                        Value::Text("it's".into()),
                    ],
                    ValueType::Date => vec![date(2020, 1, 31), date(2020, 2, 1), date(2021, 12, 31)],
                };
                let size = rng.random_range(1..=3);
                let mut domain: Vec<Value> = pool.choose_multiple(rng, size).cloned().collect();
                if size < 3 && rng.random_bool(0.5) {
                    domain.push(Value::Null);
                }
                GenVar { name: format!("v{i}"), ty, domain }
            })
            .collect();
        RuleGenerator { vars, max_depth: 3, implies_root: 0.8 }
    }

    pub fn schema(&self) -> Schema {
        let mut schema = Schema::new();
        for v in &self.vars {
            schema.insert(&v.name, v.ty);
        }
        schema
    }

    /// Every assignment of domain values to the variables.
    pub fn records(&self) -> Vec<Record> {
        let mut out = vec![Record::new()];
        for var in &self.vars {
            out = out
                .into_iter()
                .flat_map(|r| var.domain.iter().map(move |v| r.clone().with(&var.name, v.clone())))
                .collect();
        }
        out
    }

    pub fn rule<R: Rng + ?Sized>(&self, rng: &mut R) -> Expr {
        if rng.random_bool(self.implies_root) {
            Expr::implies(self.expr(rng, self.max_depth - 1), self.expr(rng, self.max_depth - 1))
        } else {
            self.expr(rng, self.max_depth)
        }
    }

    pub fn expr<R: Rng + ?Sized>(&self, rng: &mut R, depth: u32) -> Expr {
        if depth == 0 || rng.random_bool(0.4) {
            return self.atom(rng);
        }
        match rng.random_range(0..7) {
            0 | 1 => Expr::and(self.expr(rng, depth - 1), self.expr(rng, depth - 1)),
            2 | 3 => Expr::or(self.expr(rng, depth - 1), self.expr(rng, depth - 1)),
            4 => Expr::not(self.expr(rng, depth - 1)),
            5 => Expr::implies(self.expr(rng, depth - 1), self.expr(rng, depth - 1)),
            _ => self.atom(rng),
        }
    }

    fn literal<R: Rng + ?Sized>(&self, rng: &mut R, var: &GenVar) -> Literal {
        let values: Vec<&Value> = var.domain.iter().filter(|v| !v.is_null()).collect();
        match values.choose(rng) {
            Some(v) => literal_of(v).unwrap(),
            None => match var.ty {
                ValueType::Integer => Literal::Integer(0),
                ValueType::Decimal => Literal::Decimal(0.0),
                ValueType::Text => Literal::Text("x".into()),
                ValueType::Date => Literal::Date(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()),
            },
        }
    }

    fn atom<R: Rng + ?Sized>(&self, rng: &mut R) -> Expr {
        let var = self.vars.choose(rng).expect("at least one variable");
        let op = *CMP_OPS.choose(rng).unwrap();
        let kind = rng.random_range(0..10);
        match kind {
            0 | 1 => {
                let count = rng.random_range(1..=2);
                let list = (0..count).map(|_| self.literal(rng, var)).collect();
                let op = if rng.random_bool(0.5) { InclusionOp::In } else { InclusionOp::NotIn };
                Expr::Inclusion { op, term: Term::Var(var.name.clone()), list }
            }
            2 => {
                let partners: Vec<&GenVar> = self.vars.iter().filter(|o| o.ty.comparable_with(var.ty)).collect();
                let other = partners.choose(rng).unwrap();
                Expr::cmp(Term::Var(var.name.clone()), op, Term::Var(other.name.clone()))
            }
            3 | 4 if var.ty == ValueType::Text => {
                let Literal::Text(s) = self.literal(rng, var) else { unreachable!() };
                let keep = rng.random_range(0..=s.chars().count());
                let (pattern, op) = if rng.random_bool(0.5) {
                    (s.chars().take(keep).collect(), StringOp::StartsWith)
                } else {
                    (s.chars().skip(keep).collect(), StringOp::EndsWith)
                };
                Expr::StringPredicate { op, var: var.name.clone(), pattern }
            }
            5 if var.ty == ValueType::Text => {
                let start = rng.random_range(1..=3);
                let end = rng.random_range(1..=3);
                let rhs = Term::Lit(self.literal(rng, var));
                Expr::cmp(Term::Substring { var: var.name.clone(), start, end }, op, rhs)
            }
            _ => {
                let lit = Term::Lit(self.literal(rng, var));
                if rng.random_bool(0.2) {
                    Expr::cmp(lit, op, Term::Var(var.name.clone()))
                } else {
                    Expr::cmp(Term::Var(var.name.clone()), op, lit)
                }
            }
        }
    }
}

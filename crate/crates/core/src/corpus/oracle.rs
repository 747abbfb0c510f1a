//! Brute-force search for records that drive a rule to each tri-state outcome.
//!
//! Each variable ranges over Null followed by values derived from the literals
//! the rule compares it with. Assignments are enumerated in lexicographic order
//! of those domains, so the first witness found prefers Null in the
//! alphabetically earlier variables.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Days, NaiveDate};
use thiserror::Error;

use crate::rule::{categorize, DateStyle, Expr, Literal, Record, Rule, RuleKey, Schema, Term, TriState, Value, ValueType};
use crate::testgen::{GeneratedTestSet, TestCase, TestIntent};

pub const MAX_ASSIGNMENTS: u64 = 5_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("rule {key} reads variable {var} which the schema does not declare")]
    UnknownVariable { key: RuleKey, var: String },
    #[error("rule {key} has {count} candidate assignments, more than the search limit")]
    TooLarge { key: RuleKey, count: u64 },
    #[error("rule {key} has no witness for {}", .intents.iter().map(|i| i.key()).collect::<Vec<_>>().join(", "))]
    Unsatisfiable { key: RuleKey, intents: Vec<TestIntent> },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Witnesses {
    pub pass: Option<Record>,
    pub fail: Option<Record>,
    pub not_applied: Option<Record>,
}

impl Witnesses {
    pub fn get(&self, t: TriState) -> Option<&Record> {
        match t {
            TriState::Pass => self.pass.as_ref(),
            TriState::Fail => self.fail.as_ref(),
            TriState::NotApplied => self.not_applied.as_ref(),
        }
    }

    fn slot(&mut self, t: TriState) -> &mut Option<Record> {
        match t {
            TriState::Pass => &mut self.pass,
            TriState::Fail => &mut self.fail,
            TriState::NotApplied => &mut self.not_applied,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.pass.is_some() && self.fail.is_some() && self.not_applied.is_some()
    }
}

/// Candidate values for one variable, gathered from the rule.
#[derive(Default)]
struct Candidates {
    numbers: Vec<f64>,
    dates: Vec<NaiveDate>,
    texts: Vec<String>,
}

fn collect(expr: &Expr, out: &mut BTreeMap<String, Candidates>, links: &mut Vec<(String, String)>) {
    fn add_lit(out: &mut BTreeMap<String, Candidates>, term: &Term, lit: &Literal) {
        let Some(var) = term.variable() else { return };
        let c = out.entry(var.to_string()).or_default();
        match (term, lit) {
            (Term::Substring { start, end, .. }, Literal::Text(s)) => {
                let pad = "x".repeat(start.saturating_sub(1) as usize);
                let width = (*end as usize + 1).saturating_sub(*start as usize).max(s.chars().count());
                c.texts.push(format!("{pad}{s}"));
                c.texts.push(format!("{pad}{}", "y".repeat(width)));
                let mut longer = format!("{pad}{s}");
                while longer.chars().count() < *end as usize {
                    longer.push('x');
                }
                c.texts.push(longer);
            }
            (_, Literal::Integer(i)) => c.numbers.push(*i as f64),
            (_, Literal::Decimal(d)) => c.numbers.push(*d),
            (_, Literal::Date(d)) => c.dates.push(*d),
            (_, Literal::Text(s)) => c.texts.push(s.clone()),
        }
    }
    match expr {
        Expr::And(a, b) | Expr::Or(a, b) | Expr::Implies(a, b) => {
            collect(a, out, links);
            collect(b, out, links);
        }
        Expr::Not(a) => collect(a, out, links),
        Expr::Compare { lhs, rhs, .. } => {
            for t in [lhs, rhs] {
                if let Some(v) = t.variable() {
                    out.entry(v.to_string()).or_default();
                }
            }
            match (lhs, rhs) {
                (Term::Lit(l), t) | (t, Term::Lit(l)) => add_lit(out, t, l),
                (a, b) => links.push((a.variable().unwrap().to_string(), b.variable().unwrap().to_string())),
            }
        }
        Expr::Inclusion { term, list, .. } => {
            if let Some(v) = term.variable() {
                out.entry(v.to_string()).or_default();
            }
            for l in list {
                add_lit(out, term, l);
            }
        }
        Expr::StringPredicate { var, pattern, .. } => {
            let c = out.entry(var.clone()).or_default();
            c.texts.push(pattern.clone());
            c.texts.push(format!("{pattern}0"));
            c.texts.push(format!("0{pattern}"));
        }
    }
}

fn expand(c: &Candidates, ty: ValueType) -> Vec<Value> {
    let mut values = Vec::new();
    let mut push = |v: Value| {
        if !values.contains(&v) {
            values.push(v);
        }
    };
    match ty {
        ValueType::Integer => {
            for n in &c.numbers {
                let (lo, hi) = (n.floor() as i64, n.ceil() as i64);
                for i in [lo - 1, lo, hi, hi + 1] {
                    push(Value::Integer(i));
                }
            }
        }
        ValueType::Decimal => {
            for n in &c.numbers {
                for d in [n - 1.0, *n, n + 1.0] {
                    push(Value::Decimal(d));
                }
            }
        }
        ValueType::Date => {
            for d in &c.dates {
                let around = [d.checked_sub_days(Days::new(1)), Some(*d), d.checked_add_days(Days::new(1))];
                for x in around.into_iter().flatten() {
                    push(Value::Date(x));
                }
            }
        }
        ValueType::Text => {
            for s in &c.texts {
                let mut shorter = s.clone();
                shorter.pop();
                for t in [s.clone(), format!("{s}0"), shorter] {
                    push(Value::Text(t));
                }
            }
            let mut fresh = String::from("zz");
            while c.texts.contains(&fresh) {
                fresh.push('z');
            }
            push(Value::Text(fresh));
        }
    }
    values
}

fn defaults(ty: ValueType) -> Vec<Value> {
    let d = |y, m, day| Value::Date(NaiveDate::from_ymd_opt(y, m, day).unwrap());
    match ty {
        ValueType::Integer => vec![Value::Integer(0), Value::Integer(1)],
        ValueType::Decimal => vec![Value::Decimal(0.0), Value::Decimal(1.0)],
        ValueType::Date => vec![d(2020, 1, 1), d(2020, 1, 2)],
        ValueType::Text => vec![Value::Text("a".into()), Value::Text("b".into())],
    }
}

fn convert(v: &Value, ty: ValueType) -> Vec<Value> {
    match (v, ty) {
        (Value::Integer(i), ValueType::Decimal) => vec![Value::Decimal(*i as f64)],
        (Value::Decimal(d), ValueType::Integer) => {
            let (lo, hi) = (d.floor() as i64, d.ceil() as i64);
            if lo == hi {
                vec![Value::Integer(lo)]
            } else {
                vec![Value::Integer(lo), Value::Integer(hi)]
            }
        }
        (v, t) if v.value_type() == Some(t) => vec![v.clone()],
        _ => Vec::new(),
    }
}

/// Per-variable search domains, Null first, for every variable the rule reads.
pub fn witness_domains(rule: &Rule, schema: &Schema) -> Result<BTreeMap<String, Vec<Value>>, OracleError> {
    let mut cands = BTreeMap::new();
    let mut links = Vec::new();
    collect(&rule.expression, &mut cands, &mut links);
    let mut domains = BTreeMap::new();
    for (var, c) in &cands {
        let ty = schema
            .get(var)
            .ok_or_else(|| OracleError::UnknownVariable { key: rule.key(), var: var.clone() })?;
        domains.insert(var.clone(), (ty, expand(c, ty)));
    }
    // Variables compared with each other share their values so that both orderings and equality are reachable.
    let groups = link_groups(&links);
    for group in groups {
        let pooled: Vec<Value> = group.iter().flat_map(|v| domains[v].1.clone()).collect();
        for var in &group {
            let (ty, values) = domains.get_mut(var).unwrap();
            let ty = *ty;
            let mut extra: Vec<Value> = pooled.iter().flat_map(|v| convert(v, ty)).collect();
            if extra.is_empty() && values.is_empty() {
                extra = defaults(ty);
            }
            for v in extra {
                if !values.contains(&v) {
                    values.push(v);
                }
            }
        }
    }
    Ok(domains
        .into_iter()
        .map(|(var, (ty, mut values))| {
            if values.is_empty() {
                values = defaults(ty);
            }
            values.insert(0, Value::Null);
            (var, values)
        })
        .collect())
}

fn link_groups(links: &[(String, String)]) -> Vec<BTreeSet<String>> {
    let mut groups: Vec<BTreeSet<String>> = Vec::new();
    for (a, b) in links {
        let hits: Vec<usize> = (0..groups.len()).filter(|&i| groups[i].contains(a) || groups[i].contains(b)).collect();
        let mut merged: BTreeSet<String> = [a.clone(), b.clone()].into();
        for &i in hits.iter().rev() {
            merged.extend(groups.remove(i));
        }
        groups.push(merged);
    }
    groups
}

/// First witness per outcome over the search domains. Assignments that raise evaluation errors are skipped.
pub fn find_witnesses(rule: &Rule, schema: &Schema) -> Result<Witnesses, OracleError> {
    let domains: Vec<(String, Vec<Value>)> = witness_domains(rule, schema)?.into_iter().collect();
    let count = domains.iter().try_fold(1u64, |acc, (_, d)| acc.checked_mul(d.len() as u64)).unwrap_or(u64::MAX);
    if count > MAX_ASSIGNMENTS {
        return Err(OracleError::TooLarge { key: rule.key(), count });
    }
    let mut found = Witnesses::default();
    let mut idx = vec![0usize; domains.len()];
    loop {
        let record: Record = domains.iter().zip(&idx).map(|((n, d), &i)| (n.clone(), d[i].clone())).collect();
        if let Ok(t) = categorize(&rule.expression, &record) {
            let slot = found.slot(t);
            if slot.is_none() {
                *slot = Some(record);
                if found.is_complete() {
                    return Ok(found);
                }
            }
        }
        // Advance the mixed-radix counter, last variable fastest.
        let mut pos = domains.len();
        loop {
            if pos == 0 {
                return Ok(found);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < domains[pos].1.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

fn to_case(record: &Record, style: DateStyle) -> TestCase {
    record.to_json(style)
}

/// One verified witness per test kind, rendered with the given date style.
pub fn oracle_tests_styled(rule: &Rule, schema: &Schema, style: DateStyle) -> Result<GeneratedTestSet, OracleError> {
    let w = find_witnesses(rule, schema)?;
    let missing: Vec<TestIntent> =
        TestIntent::ALL.into_iter().filter(|i| w.get(i.expected()).is_none()).collect();
    if !missing.is_empty() {
        return Err(OracleError::Unsatisfiable { key: rule.key(), intents: missing });
    }
    Ok(GeneratedTestSet {
        satisfying_case: to_case(w.pass.as_ref().unwrap(), style),
        violating_case: to_case(w.fail.as_ref().unwrap(), style),
        invalid_case: to_case(w.not_applied.as_ref().unwrap(), style),
        confidence_score: 1.0,
    })
}

pub fn oracle_tests(rule: &Rule, schema: &Schema) -> Result<GeneratedTestSet, OracleError> {
    oracle_tests_styled(rule, schema, DateStyle::Iso)
}

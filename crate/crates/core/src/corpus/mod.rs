//! Synthetic rule corpus, schema and baseline message template.

pub mod oracle;

use chrono::NaiveDate;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rule::{CmpOp, DateStyle, Expr, InclusionOp, Literal, Record, Rule, Schema, StringOp, Term, Value, ValueType};
use crate::testgen::TestCase;

pub use oracle::{find_witnesses, oracle_tests, oracle_tests_styled, witness_domains, OracleError, Witnesses};

/// The variable whose absence blocks aggregation in the simulated service.
pub const PRE_AGGREGATION_VAR: &str = "ds";

const VARIABLES: [(&str, ValueType); 13] = [
    ("age", ValueType::Integer),
    ("basis", ValueType::Integer),
    ("behaviour", ValueType::Integer),
    ("birthDate", ValueType::Date),
    ("diagnosisDate", ValueType::Date),
    ("ds", ValueType::Integer),
    ("icd10", ValueType::Text),
    ("laterality", ValueType::Integer),
    ("morphology", ValueType::Text),
    ("stage", ValueType::Text),
    ("surgeryDate", ValueType::Date),
    ("topography", ValueType::Text),
    ("tumourSize", ValueType::Decimal),
];

pub fn variable_pool() -> Schema {
    let mut schema = Schema::new();
    for (name, ty) in VARIABLES {
        schema.insert(name, ty);
    }
    schema
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

/// Values for every pool variable that no corpus rule rejects with an error.
pub fn baseline_template() -> TestCase {
    Record::new()
        .with("age", Value::Integer(62))
        .with("basis", Value::Integer(7))
        .with("behaviour", Value::Integer(3))
        .with("birthDate", Value::Date(date(1959, 6, 1)))
        .with("diagnosisDate", Value::Date(date(2021, 3, 15)))
        .with("ds", Value::Integer(1))
        .with("icd10", Value::Text("C50.9".into()))
        .with("laterality", Value::Integer(1))
        .with("morphology", Value::Text("8140/3".into()))
        .with("stage", Value::Text("II".into()))
        .with("surgeryDate", Value::Date(date(2021, 4, 2)))
        .with("topography", Value::Text("C509".into()))
        .with("tumourSize", Value::Decimal(2.5))
        .to_json(DateStyle::Iso)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Feature {
    Plain,
    Inclusion,
    StringPredicate,
    Substring,
    DateComparison,
}

impl Feature {
    /// Features with a per-corpus quota, besides the implication root and version pairs.
    pub const QUOTA: [Feature; 4] =
        [Feature::Inclusion, Feature::StringPredicate, Feature::Substring, Feature::DateComparison];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub count: usize,
    /// Minimum number of rules showing each structural feature.
    pub quota: usize,
    pub seed: u64,
}

impl CorpusSpec {
    pub fn new(count: usize, seed: u64) -> Self {
        CorpusSpec { count, quota: 3, seed }
    }

    pub fn version_pairs(&self) -> usize {
        self.quota.div_ceil(2)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("{count} rules cannot meet a quota of {quota} rules per feature with {pairs} version pairs")]
    Infeasible { count: usize, quota: usize, pairs: usize },
    #[error("no rule with witnesses for every outcome found after {0} attempts")]
    Exhausted(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub rules: Vec<Rule>,
    pub schema: Schema,
    pub template: TestCase,
}

struct Clause {
    expr: Expr,
    vars: Vec<&'static str>,
    feature: Feature,
}

fn var(name: &str) -> Term {
    Term::Var(name.to_string())
}

fn texts(items: &[&str]) -> Vec<Literal> {
    items.iter().map(|s| Literal::Text(s.to_string())).collect()
}

fn pick<'a, R: Rng>(rng: &mut R, items: &[&'a str], n: usize) -> Vec<&'a str> {
    let mut chosen: Vec<&str> = items.choose_multiple(rng, n).copied().collect();
    chosen.sort_unstable();
    chosen
}

fn random_date<R: Rng>(rng: &mut R, years: std::ops::RangeInclusive<i32>) -> Literal {
    let y = rng.random_range(years);
    let m = rng.random_range(1..=12);
    let d = rng.random_range(1..=28);
    Literal::Date(date(y, m, d))
}

/// One clause of the requested feature over variables not yet used by the rule.
fn make_clause<R: Rng>(rng: &mut R, feature: Feature, used: &[&str]) -> Option<Clause> {
    const TOPO: [&str; 8] = ["C500", "C501", "C504", "C509", "C180", "C187", "C619", "C341"];
    const MORPH: [&str; 5] = ["8140", "8500", "8070", "8520", "8010"];
    const STAGES: [&str; 4] = ["I", "II", "III", "IV"];
    let free = |v: &str| !used.contains(&v);
    let mut options: Vec<Clause> = Vec::new();
    let mut add = |expr: Expr, vars: Vec<&'static str>| {
        if vars.iter().all(|v| free(v)) {
            options.push(Clause { expr, vars, feature });
        }
    };
    let cmp = |v: &str, op, lit: Literal| Expr::cmp(var(v), op, Term::Lit(lit));
    let any_op = |rng: &mut R| *[CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge].choose(rng).unwrap();
    let inc = |rng: &mut R| if rng.random_bool(0.7) { InclusionOp::In } else { InclusionOp::NotIn };
    match feature {
        Feature::Inclusion => {
            let n = rng.random_range(2..=3);
            add(Expr::Inclusion { op: inc(rng), term: var("topography"), list: texts(&pick(rng, &TOPO, n)) }, vec![
                "topography",
            ]);
            let mut codes: Vec<i64> = [1, 2, 4, 5, 6, 7].choose_multiple(rng, 3).copied().collect();
            codes.sort_unstable();
            let list = codes.into_iter().map(Literal::Integer).collect();
            add(Expr::Inclusion { op: inc(rng), term: var("basis"), list }, vec!["basis"]);
            add(Expr::Inclusion { op: inc(rng), term: var("stage"), list: texts(&pick(rng, &STAGES, 2)) }, vec![
                "stage",
            ]);
            let list = vec![Literal::Integer(1), Literal::Integer(2)];
            add(Expr::Inclusion { op: inc(rng), term: var("laterality"), list }, vec!["laterality"]);
        }
        Feature::StringPredicate => {
            let p = ["C5", "C6", "C1"].choose(rng).unwrap().to_string();
            add(Expr::StringPredicate { op: StringOp::StartsWith, var: "icd10".into(), pattern: p }, vec!["icd10"]);
            let p = ["/3", "/2", "/1"].choose(rng).unwrap().to_string();
            add(Expr::StringPredicate { op: StringOp::EndsWith, var: "morphology".into(), pattern: p }, vec![
                "morphology",
            ]);
            let p = ["C50", "C18", "C61"].choose(rng).unwrap().to_string();
            add(Expr::StringPredicate { op: StringOp::StartsWith, var: "topography".into(), pattern: p }, vec![
                "topography",
            ]);
        }
        Feature::Substring => {
            let sub = Term::Substring { var: "morphology".into(), start: 1, end: 4 };
            if rng.random_bool(0.5) {
                add(Expr::Inclusion { op: InclusionOp::In, term: sub, list: texts(&pick(rng, &MORPH, 2)) }, vec![
                    "morphology",
                ]);
            } else {
                let m = MORPH.choose(rng).unwrap();
                add(Expr::cmp(sub, CmpOp::Eq, Term::text(m)), vec!["morphology"]);
            }
            let code = ["C50", "C18", "C34"].choose(rng).unwrap();
            let sub = Term::Substring { var: "topography".into(), start: 1, end: 3 };
            add(Expr::cmp(sub, CmpOp::Eq, Term::text(code)), vec!["topography"]);
            let sub = Term::Substring { var: "icd10".into(), start: 2, end: 3 };
            add(Expr::cmp(sub, CmpOp::Eq, Term::text(&code[1..])), vec!["icd10"]);
        }
        Feature::DateComparison => {
            add(cmp("diagnosisDate", any_op(rng), random_date(rng, 2010..=2022)), vec!["diagnosisDate"]);
            add(cmp("surgeryDate", any_op(rng), random_date(rng, 2012..=2023)), vec!["surgeryDate"]);
            add(Expr::cmp(var("birthDate"), CmpOp::Lt, var("diagnosisDate")), vec!["birthDate", "diagnosisDate"]);
            add(Expr::cmp(var("surgeryDate"), CmpOp::Ge, var("diagnosisDate")), vec!["surgeryDate", "diagnosisDate"]);
            add(cmp("birthDate", CmpOp::Gt, random_date(rng, 1920..=1950)), vec!["birthDate"]);
        }
        Feature::Plain => {
            add(cmp("age", any_op(rng), Literal::Integer(rng.random_range(1..=9) * 10)), vec!["age"]);
            add(cmp("behaviour", *[CmpOp::Eq, CmpOp::Ne].choose(rng).unwrap(), Literal::Integer(3)), vec![
                "behaviour",
            ]);
            add(cmp("ds", *[CmpOp::Eq, CmpOp::Ge].choose(rng).unwrap(), Literal::Integer(1)), vec!["ds"]);
            let size = f64::from(rng.random_range(1..=12)) / 2.0;
            add(cmp("tumourSize", any_op(rng), Literal::Decimal(size)), vec!["tumourSize"]);
            add(cmp("laterality", CmpOp::Ne, Literal::Integer(9)), vec!["laterality"]);
            let s = STAGES.choose(rng).unwrap();
            add(cmp("stage", *[CmpOp::Eq, CmpOp::Ne].choose(rng).unwrap(), Literal::Text(s.to_string())), vec![
                "stage",
            ]);
            add(cmp("basis", CmpOp::Ge, Literal::Integer(rng.random_range(1..=7))), vec!["basis"]);
        }
    }
    if options.is_empty() {
        return None;
    }
    let i = rng.random_range(0..options.len());
    Some(options.swap_remove(i))
}

fn conj(mut clauses: impl Iterator<Item = Expr>) -> Expr {
    let first = clauses.next().expect("at least one clause");
    clauses.fold(first, Expr::and)
}

/// Joins with randomly chosen connectives, optionally negating one operand.
fn mixed<R: Rng>(rng: &mut R, clauses: Vec<Expr>) -> Expr {
    let negate = if clauses.len() > 1 && rng.random_bool(0.25) { Some(rng.random_range(0..clauses.len())) } else { None };
    let mut it = clauses.into_iter().enumerate().map(|(i, e)| if Some(i) == negate { Expr::not(e) } else { e });
    let first = it.next().expect("at least one clause");
    it.fold(first, |acc, e| if rng.random_bool(0.5) { Expr::and(acc, e) } else { Expr::or(acc, e) })
}

struct Shape {
    left: Vec<Clause>,
    right_features: Vec<Feature>,
}

fn build<R: Rng>(rng: &mut R, features: &[Feature], three_ands: bool) -> Option<(Shape, Vec<Clause>)> {
    let mut used: Vec<&str> = Vec::new();
    let mut clauses = Vec::new();
    for &f in features {
        let c = make_clause(rng, f, &used)?;
        used.extend(&c.vars);
        clauses.push(c);
    }
    let target = if three_ands { 5 } else { rng.random_range(2..=4).max(clauses.len()) };
    while clauses.len() < target {
        let f = if rng.random_bool(0.6) { Feature::Plain } else { *Feature::QUOTA.choose(rng).unwrap() };
        let c = make_clause(rng, f, &used).or_else(|| make_clause(rng, Feature::Plain, &used))?;
        used.extend(&c.vars);
        clauses.push(c);
    }
    clauses.shuffle(rng);
    let split = if three_ands { 4 } else { rng.random_range(1..clauses.len()) };
    let right = clauses.split_off(split);
    let right_features = right.iter().map(|c| c.feature).collect();
    Some((Shape { left: clauses, right_features }, right))
}

fn assemble<R: Rng>(rng: &mut R, left: &[Clause], right: Vec<Clause>, three_ands: bool) -> Expr {
    let l = conj(left.iter().map(|c| c.expr.clone()));
    let r_exprs: Vec<Expr> = right.into_iter().map(|c| c.expr).collect();
    let r = if three_ands { conj(r_exprs.into_iter()) } else { mixed(rng, r_exprs) };
    Expr::implies(l, r)
}

fn complete(rule: &Rule, schema: &Schema) -> bool {
    find_witnesses(rule, schema).map(|w| w.is_complete()).unwrap_or(false)
}

const ATTEMPTS: usize = 200;

/// A deterministic corpus for `spec`. Every rule has an implication root
/// and admits Pass, Fail and NotApplied witnesses.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus, CorpusError> {
    let schema = variable_pool();
    let template = baseline_template();
    if spec.count == 0 {
        return Ok(Corpus { rules: Vec::new(), schema, template });
    }
    let pairs = spec.version_pairs();
    let primaries = spec.count.saturating_sub(pairs);
    if spec.count < 2 * pairs || primaries < spec.quota {
        return Err(CorpusError::Infeasible { count: spec.count, quota: spec.quota, pairs });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut features: Vec<Vec<Feature>> = vec![Vec::new(); primaries];
    for f in Feature::QUOTA {
        let mut slots: Vec<usize> = (0..primaries).collect();
        slots.shuffle(&mut rng);
        for &s in slots.iter().take(spec.quota) {
            features[s].push(f);
        }
    }
    let width = primaries.to_string().len().max(2);
    let mut rules = Vec::with_capacity(spec.count);
    for (i, feats) in features.iter().enumerate() {
        let id = format!("V{:0width$}", i + 1);
        let three_ands = i == primaries - 1;
        let paired = i < pairs;
        let mut made = false;
        for _ in 0..ATTEMPTS {
            let Some((shape, right)) = build(&mut rng, feats, three_ands) else { continue };
            let v1 = Rule::new(&id, 1, assemble(&mut rng, &shape.left, right, three_ands));
            if !complete(&v1, &schema) {
                continue;
            }
            if !paired {
                rules.push(v1);
                made = true;
                break;
            }
            let used: Vec<&str> = shape.left.iter().flat_map(|c| c.vars.iter().copied()).collect();
            let mut fresh = Vec::new();
            let mut taken = used.clone();
            for &f in &shape.right_features {
                let Some(c) = make_clause(&mut rng, f, &taken) else { break };
                taken.extend(&c.vars);
                fresh.push(c);
            }
            if fresh.len() != shape.right_features.len() {
                continue;
            }
            let v2 = Rule::new(&id, 2, assemble(&mut rng, &shape.left, fresh, false));
            if v2.expression == v1.expression || !complete(&v2, &schema) {
                continue;
            }
            rules.push(v1);
            rules.push(v2);
            made = true;
            break;
        }
        if !made {
            return Err(CorpusError::Exhausted(ATTEMPTS));
        }
    }
    Ok(Corpus { rules, schema, template })
}

/// Which quota features a rule shows.
pub fn features_of(expr: &Expr) -> Vec<Feature> {
    fn walk(e: &Expr, out: &mut Vec<Feature>) {
        let mut add = |f| {
            if !out.contains(&f) {
                out.push(f)
            }
        };
        match e {
            Expr::And(a, b) | Expr::Or(a, b) | Expr::Implies(a, b) => {
                walk(a, out);
                walk(b, out);
            }
            Expr::Not(a) => walk(a, out),
            Expr::Compare { lhs, rhs, .. } => {
                for t in [lhs, rhs] {
                    if matches!(t, Term::Substring { .. }) {
                        add(Feature::Substring);
                    }
                    if matches!(t, Term::Lit(Literal::Date(_))) {
                        add(Feature::DateComparison);
                    }
                }
                if let (Term::Var(a), Term::Var(_)) = (lhs, rhs) {
                    if a.ends_with("Date") {
                        add(Feature::DateComparison);
                    }
                }
            }
            Expr::Inclusion { term, .. } => {
                add(Feature::Inclusion);
                if matches!(term, Term::Substring { .. }) {
                    add(Feature::Substring);
                }
            }
            Expr::StringPredicate { .. } => add(Feature::StringPredicate),
        }
    }
    let mut out = Vec::new();
    walk(expr, &mut out);
    out.sort();
    out
}

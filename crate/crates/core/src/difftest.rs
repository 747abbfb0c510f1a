//! Running generated tests against the reference engine and a validation service, and the match/mismatch ledger.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::reference::{validate_json, RefOutcome};
use crate::rule::{Rule, RuleKey, Schema};
use crate::sim::{Message, ServiceError, ServiceResult, ValidationService};
use crate::testgen::{GenerationRecord, RetryPolicy, TestCase, TestIntent};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbedError {
    #[error("test variable {0:?} is not part of the message schema")]
    UnknownVariable(String),
}

/// The template with the test's variables written over it.
pub fn embed(test: &TestCase, template: &TestCase, schema: &Schema) -> Result<Message, EmbedError> {
    let mut message = template.clone();
    for (k, v) in test {
        if !schema.contains(k) {
            return Err(EmbedError::UnknownVariable(k.clone()));
        }
        message.insert(k.clone(), v.clone());
    }
    Ok(message)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Match,
    Mismatch(ServiceResult),
}

impl Verdict {
    /// Equal tri-state results match; anything else is a mismatch filed under the service's result.
    pub fn of(reference: &RefOutcome, service: ServiceResult) -> Self {
        match reference {
            RefOutcome::Result(t) if ServiceResult::from_tri(*t) == service => Verdict::Match,
            _ => Verdict::Mismatch(service),
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Match => f.write_str("Match"),
            Verdict::Mismatch(c) => write!(f, "Mismatch({c})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffRecord {
    pub provider: String,
    pub rule_id: String,
    pub version: u32,
    pub intent: TestIntent,
    pub repetition: u32,
    pub reference: RefOutcome,
    pub service: ServiceResult,
    pub verdict: Verdict,
}

impl DiffRecord {
    pub fn key(&self) -> RuleKey {
        RuleKey::new(&self.rule_id, self.version)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("service unavailable: {0}")]
    Service(#[from] ServiceError),
}

/// A single test identified by where it came from.
#[derive(Debug, Clone, Copy)]
pub struct TestRef<'a> {
    pub provider: &'a str,
    pub rule: &'a Rule,
    pub intent: TestIntent,
    pub repetition: u32,
    pub test: &'a TestCase,
}

pub struct DiffContext<'a> {
    pub schema: &'a Schema,
    pub template: &'a TestCase,
    pub service: &'a dyn ValidationService,
    pub retry: RetryPolicy,
}

/// Evaluates one test on the bare record (reference) and on the embedded message (service).
pub fn run_pair(t: TestRef<'_>, ctx: &DiffContext<'_>) -> Result<DiffRecord, DiffError> {
    let reference = validate_json(t.rule, t.test, ctx.schema);
    let message = embed(t.test, ctx.template, ctx.schema)?;
    let response = ctx.retry.run(|| ctx.service.validate(&message), |e| matches!(e, ServiceError::Transport(_)))?;
    let service = response.result_for(&t.rule.key());
    Ok(DiffRecord {
        provider: t.provider.to_string(),
        rule_id: t.rule.id.clone(),
        version: t.rule.version,
        intent: t.intent,
        repetition: t.repetition,
        verdict: Verdict::of(&reference, service),
        reference,
        service,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTest {
    pub provider: String,
    pub rule_id: String,
    pub version: u32,
    pub intent: TestIntent,
    pub repetition: u32,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiffRun {
    pub records: Vec<DiffRecord>,
    /// Tests that could not be executed; they are left out of the ledger.
    pub skipped: Vec<SkippedTest>,
}

/// Runs every test of every exact-match generation for the given rules. Generations for other rules are ignored.
pub fn run_generations(
    rules: &[Rule],
    generations: &[GenerationRecord],
    ctx: &DiffContext<'_>,
    exec: Execution,
) -> DiffRun {
    let by_key: BTreeMap<RuleKey, &Rule> = rules.iter().map(|r| (r.key(), r)).collect();
    let mut jobs = Vec::new();
    for g in generations {
        let (Some(rule), Some(tests)) = (by_key.get(&g.key()), g.outcome.tests()) else { continue };
        for intent in TestIntent::ALL {
            jobs.push(TestRef {
                provider: &g.provider,
                rule,
                intent,
                repetition: g.repetition,
                test: tests.case(intent),
            });
        }
    }
    let results = exec.map(&jobs, |t| run_pair(*t, ctx));
    let mut run = DiffRun::default();
    for (t, result) in jobs.iter().zip(results) {
        match result {
            Ok(r) => run.records.push(r),
            Err(e) => {
                log::warn!("{} {:?} repetition {} not executed: {e}", t.rule.key(), t.intent, t.repetition);
                run.skipped.push(SkippedTest {
                    provider: t.provider.to_string(),
                    rule_id: t.rule.id.clone(),
                    version: t.rule.version,
                    intent: t.intent,
                    repetition: t.repetition,
                    reason: e.to_string(),
                });
            }
        }
    }
    run.records.sort_by(|a, b| {
        (&a.provider, &a.rule_id, a.version, a.intent, a.repetition).cmp(&(
            &b.provider,
            &b.rule_id,
            b.version,
            b.intent,
            b.repetition,
        ))
    });
    run
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: ServiceResult,
    pub matched: Vec<String>,
    pub mismatched: Vec<String>,
    pub match_count: usize,
    pub mismatch_count: usize,
    pub match_pct: f64,
    pub mismatch_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffLedger {
    pub provider: String,
    /// Rule labels in key order: the bare id when the id has a single executed version, else `id/version`.
    pub executed: Vec<String>,
    pub rows: Vec<CategoryRow>,
}

impl DiffLedger {
    pub fn row(&self, category: ServiceResult) -> &CategoryRow {
        self.rows.iter().find(|r| r.category == category).expect("every category has a row")
    }
}

fn labels(keys: &BTreeSet<RuleKey>) -> BTreeMap<RuleKey, String> {
    let mut versions: BTreeMap<&str, usize> = BTreeMap::new();
    for k in keys {
        *versions.entry(&k.id).or_default() += 1;
    }
    keys.iter()
        .map(|k| {
            let label = if versions[k.id.as_str()] > 1 { k.to_string() } else { k.id.clone() };
            (k.clone(), label)
        })
        .collect()
}

fn pct(n: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        n as f64 * 100.0 / total as f64
    }
}

/// One ledger per provider. A rule mismatches in a category when any of its records mismatches with that service result.
pub fn ledger(records: &[DiffRecord]) -> Vec<DiffLedger> {
    let mut providers: BTreeMap<&str, Vec<&DiffRecord>> = BTreeMap::new();
    for r in records {
        providers.entry(&r.provider).or_default().push(r);
    }
    providers
        .into_iter()
        .map(|(provider, recs)| {
            let executed: BTreeSet<RuleKey> = recs.iter().map(|r| r.key()).collect();
            let label = labels(&executed);
            let rows = ServiceResult::ALL
                .into_iter()
                .map(|category| {
                    let bad: BTreeSet<RuleKey> = recs
                        .iter()
                        .filter(|r| r.verdict == Verdict::Mismatch(category))
                        .map(|r| r.key())
                        .collect();
                    let matched: Vec<String> =
                        executed.iter().filter(|k| !bad.contains(k)).map(|k| label[k].clone()).collect();
                    let mismatched: Vec<String> = bad.iter().map(|k| label[k].clone()).collect();
                    CategoryRow {
                        category,
                        match_count: matched.len(),
                        mismatch_count: mismatched.len(),
                        match_pct: pct(matched.len(), executed.len()),
                        mismatch_pct: pct(mismatched.len(), executed.len()),
                        matched,
                        mismatched,
                    }
                })
                .collect();
            DiffLedger { provider: provider.to_string(), executed: executed.iter().map(|k| label[k].clone()).collect(), rows }
        })
        .collect()
}

/// Table text with one row per provider and category.
pub fn ledger_csv(ledgers: &[DiffLedger]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["provider", "category", "match", "match_pct", "mismatch", "mismatch_pct", "mismatched_rules"])
        .expect("in-memory write");
    for l in ledgers {
        for row in &l.rows {
            w.write_record([
                l.provider.clone(),
                row.category.to_string(),
                row.match_count.to_string(),
                format!("{:.2}", row.match_pct),
                row.mismatch_count.to_string(),
                format!("{:.2}", row.mismatch_pct),
                row.mismatched.join(", "),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

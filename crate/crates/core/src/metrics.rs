//! Completion rate, success index and robustness index of generated tests.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::mutation::MutantInfo;
use crate::reference::{validate_json, RefOutcome};
use crate::rule::{Rule, RuleKey, Schema};
use crate::testgen::{GenerationRecord, TestIntent};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("expected repetition count must be at least 1")]
    NoRepetitions,
    #[error("robustness needs at least one mutant")]
    NoMutants,
    #[error("inconsistent tally: {0}")]
    Tally(String),
    #[error("generations reference unknown rule {0}")]
    UnknownRule(RuleKey),
}

pub fn completion_rate(exact_matches: u32, expected: u32) -> Result<f64, MetricsError> {
    if expected == 0 {
        return Err(MetricsError::NoRepetitions);
    }
    Ok(f64::from(exact_matches) / f64::from(expected))
}

/// Closeness of (observed, true) to (expected, expected), as a percentage.
pub fn success_index(observed: u32, true_count: u32, expected: u32) -> Result<f64, MetricsError> {
    if expected == 0 {
        return Err(MetricsError::NoRepetitions);
    }
    if true_count > observed || observed > expected {
        return Err(MetricsError::Tally(format!("true {true_count}, observed {observed}, expected {expected}")));
    }
    let t = f64::from(expected);
    let distance = (t - f64::from(observed)).hypot(t - f64::from(true_count));
    Ok((1.0 - distance / (t * std::f64::consts::SQRT_2)) * 100.0)
}

/// One minus the mean absolute difference; all success indices as fractions in [0, 1].
pub fn robustness_index(original: f64, mutated: &[f64]) -> Result<f64, MetricsError> {
    if mutated.is_empty() {
        return Err(MetricsError::NoMutants);
    }
    let total: f64 = mutated.iter().map(|m| (original - m).abs()).sum();
    Ok(1.0 - total / mutated.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationTally {
    pub provider: String,
    pub rule_id: String,
    pub version: u32,
    pub intent: TestIntent,
    pub expected: u32,
    pub exact_matches: u32,
    pub observed: u32,
    pub true_count: u32,
}

impl GenerationTally {
    pub fn completion_rate(&self) -> Result<f64, MetricsError> {
        completion_rate(self.exact_matches, self.expected)
    }

    pub fn success_index(&self) -> Result<f64, MetricsError> {
        success_index(self.observed, self.true_count, self.expected)
    }
}

/// Tallies for each test type from one provider's generations of one rule.
/// A slot is observed whenever the whole reply parsed, and true when the reference agrees with its type.
pub fn tally(rule: &Rule, schema: &Schema, records: &[&GenerationRecord]) -> [GenerationTally; 3] {
    let provider = records.first().map(|r| r.provider.clone()).unwrap_or_default();
    let expected = records.len() as u32;
    let exact = records.iter().filter(|r| r.outcome.is_exact_match()).count() as u32;
    TestIntent::ALL.map(|intent| {
        let true_count = records
            .iter()
            .filter_map(|r| r.outcome.tests())
            .filter(|t| validate_json(rule, t.case(intent), schema) == RefOutcome::Result(intent.expected()))
            .count() as u32;
        GenerationTally {
            provider: provider.clone(),
            rule_id: rule.id.clone(),
            version: rule.version,
            intent,
            expected,
            exact_matches: exact,
            observed: exact,
            true_count,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Original,
    Mutant,
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleKind::Original => "original",
            RuleKind::Mutant => "mutant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub provider: String,
    pub rule_id: String,
    pub version: u32,
    pub kind: RuleKind,
    pub intent: TestIntent,
    pub cr: f64,
    pub si: f64,
    /// Percentage; only for original rules with at least one generated mutant.
    pub ri: Option<f64>,
    pub n_rt: usize,
}

/// Metrics for every (provider, rule, test type) with generations. `rules` holds originals and mutants alike.
pub fn compute(
    rules: &[Rule],
    mutants: &[MutantInfo],
    schema: &Schema,
    generations: &[GenerationRecord],
    exec: Execution,
) -> Result<Vec<MetricRow>, MetricsError> {
    let by_key: BTreeMap<RuleKey, &Rule> = rules.iter().map(|r| (r.key(), r)).collect();
    let source_of: BTreeMap<RuleKey, RuleKey> = mutants.iter().map(|m| (m.key(), m.source_key())).collect();
    let mut groups: BTreeMap<(String, RuleKey), Vec<&GenerationRecord>> = BTreeMap::new();
    for g in generations {
        groups.entry((g.provider.clone(), g.key())).or_default().push(g);
    }
    let jobs: Vec<(&String, &Rule, Vec<&GenerationRecord>)> = groups
        .iter()
        .map(|((p, k), recs)| {
            let rule = by_key.get(k).ok_or_else(|| MetricsError::UnknownRule(k.clone()))?;
            Ok((p, *rule, recs.clone()))
        })
        .collect::<Result<_, MetricsError>>()?;
    let tallies = exec.flat_map(&jobs, |(_, rule, recs)| tally(rule, schema, recs).to_vec());

    let mut rows = Vec::with_capacity(tallies.len());
    for t in &tallies {
        let key = RuleKey::new(&t.rule_id, t.version);
        rows.push(MetricRow {
            provider: t.provider.clone(),
            rule_id: t.rule_id.clone(),
            version: t.version,
            kind: if source_of.contains_key(&key) { RuleKind::Mutant } else { RuleKind::Original },
            intent: t.intent,
            cr: t.completion_rate()?,
            si: t.success_index()?,
            ri: None,
            n_rt: 0,
        });
    }

    let mut mutated: BTreeMap<(String, RuleKey, TestIntent), Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.kind == RuleKind::Mutant) {
        let source = source_of[&RuleKey::new(&r.rule_id, r.version)].clone();
        mutated.entry((r.provider.clone(), source, r.intent)).or_default().push(r.si / 100.0);
    }
    for r in rows.iter_mut().filter(|r| r.kind == RuleKind::Original) {
        if let Some(m) = mutated.get(&(r.provider.clone(), RuleKey::new(&r.rule_id, r.version), r.intent)) {
            r.ri = Some(robustness_index(r.si / 100.0, m)? * 100.0);
            r.n_rt = m.len();
        }
    }
    Ok(rows)
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["provider", "rule", "version", "kind", "testType", "CR", "SI", "RI", "n_rt"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.provider.clone(),
            r.rule_id.clone(),
            r.version.to_string(),
            r.kind.to_string(),
            r.intent.key().to_string(),
            format!("{:.6}", r.cr),
            format!("{:.6}", r.si),
            r.ri.map(|v| format!("{v:.6}")).unwrap_or_default(),
            r.n_rt.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[derive(Debug, Error)]
pub enum MetricsCsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad value {value:?} in column {column}")]
    Value { column: &'static str, value: String },
}

/// Reads back what `metrics_csv` wrote.
pub fn metrics_from_csv(text: &str) -> Result<Vec<MetricRow>, MetricsCsvError> {
    fn num<T: std::str::FromStr>(column: &'static str, value: &str) -> Result<T, MetricsCsvError> {
        value.parse().map_err(|_| MetricsCsvError::Value { column, value: value.to_string() })
    }
    let mut out = Vec::new();
    for rec in csv::Reader::from_reader(text.as_bytes()).records() {
        let rec = rec?;
        let kind = match &rec[3] {
            "original" => RuleKind::Original,
            "mutant" => RuleKind::Mutant,
            v => return Err(MetricsCsvError::Value { column: "kind", value: v.to_string() }),
        };
        let intent = TestIntent::ALL
            .into_iter()
            .find(|i| i.key() == &rec[4])
            .ok_or_else(|| MetricsCsvError::Value { column: "testType", value: rec[4].to_string() })?;
        out.push(MetricRow {
            provider: rec[0].to_string(),
            rule_id: rec[1].to_string(),
            version: num("version", &rec[2])?,
            kind,
            intent,
            cr: num("CR", &rec[5])?,
            si: num("SI", &rec[6])?,
            ri: if rec[7].is_empty() { None } else { Some(num("RI", &rec[7])?) },
            n_rt: num("n_rt", &rec[8])?,
        });
    }
    Ok(out)
}

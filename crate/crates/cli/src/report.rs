//! Run summary as JSON and as plain-text tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use rulediff_core::difftest::DiffLedger;
use rulediff_core::metrics::MetricRow;
use rulediff_core::mutation::MutantInfo;
use rulediff_core::rule::Rule;
use rulediff_core::stats::{metric_groups, metric_names, Comparison};
use rulediff_core::testgen::{GenerationRecord, Hallucination, ParseOutcome};

use crate::pipeline::LedgerFile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenerationSummary {
    pub provider: String,
    pub requests: usize,
    pub exact_matches: usize,
    pub transport_failures: usize,
    /// Count per hallucination label, every label present.
    pub hallucinations: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricSummary {
    pub metric: String,
    pub provider: String,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub seed: u64,
    pub alpha: f64,
    pub rules: usize,
    pub mutants: usize,
    pub mutants_by_operator: BTreeMap<String, usize>,
    pub generation: Vec<GenerationSummary>,
    pub ledgers: Vec<DiffLedger>,
    pub skipped_tests: usize,
    pub metrics: Vec<MetricSummary>,
    pub comparisons: Vec<Comparison>,
}

fn generation_summaries(generations: &[GenerationRecord]) -> Vec<GenerationSummary> {
    let mut by: BTreeMap<&str, GenerationSummary> = BTreeMap::new();
    for g in generations {
        let s = by.entry(&g.provider).or_insert_with(|| GenerationSummary {
            provider: g.provider.clone(),
            requests: 0,
            exact_matches: 0,
            transport_failures: 0,
            hallucinations: Hallucination::ALL.iter().map(|h| (h.label().to_string(), 0)).collect(),
        });
        s.requests += 1;
        match &g.outcome {
            ParseOutcome::Parsed { .. } => s.exact_matches += 1,
            ParseOutcome::Hallucination { hallucination } => {
                *s.hallucinations.entry(hallucination.label().to_string()).or_default() += 1
            }
            ParseOutcome::TransportFailure { .. } => s.transport_failures += 1,
        }
    }
    by.into_values().collect()
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn metric_summaries(rows: &[MetricRow]) -> Vec<MetricSummary> {
    let mut out = Vec::new();
    for metric in metric_names() {
        let Ok(groups) = metric_groups(rows, &metric) else { continue };
        for g in groups.into_iter().filter(|g| !g.observations.is_empty()) {
            let mut v = g.observations;
            v.sort_by(f64::total_cmp);
            out.push(MetricSummary {
                metric: metric.clone(),
                provider: g.label,
                n: v.len(),
                mean: v.iter().sum::<f64>() / v.len() as f64,
                median: median(&v),
            });
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn build_report(
    seed: u64,
    alpha: f64,
    rules: &[Rule],
    mutants: &[MutantInfo],
    generations: &[GenerationRecord],
    ledger: &LedgerFile,
    rows: &[MetricRow],
    comparisons: &[Comparison],
) -> Report {
    let mut by_op = BTreeMap::new();
    for m in mutants {
        *by_op.entry(m.operator.code().to_string()).or_insert(0) += 1;
    }
    Report {
        seed,
        alpha,
        rules: rules.len(),
        mutants: mutants.len(),
        mutants_by_operator: by_op,
        generation: generation_summaries(generations),
        ledgers: ledger.ledgers.clone(),
        skipped_tests: ledger.skipped.len(),
        metrics: metric_summaries(rows),
        comparisons: comparisons.to_vec(),
    }
}

fn count_pct(count: usize, pct: f64) -> String {
    format!("{count} ({pct:.2}%)")
}

/// Ledger table in the layout `57 (98.28%)`.
pub fn render_ledger(l: &DiffLedger) -> String {
    let mut s = String::new();
    writeln!(s, "Ledger for {} ({} rules executed)", l.provider, l.executed.len()).unwrap();
    writeln!(s, "{:<14} {:>14} {:>14}  Mismatched rules", "Category", "Match", "Mismatch").unwrap();
    for r in &l.rows {
        writeln!(
            s,
            "{:<14} {:>14} {:>14}  {}",
            r.category.as_str(),
            count_pct(r.match_count, r.match_pct),
            count_pct(r.mismatch_count, r.mismatch_pct),
            if r.mismatched.is_empty() { "-".to_string() } else { r.mismatched.join(", ") }
        )
        .unwrap();
    }
    s
}

pub fn render_comparisons(comparisons: &[Comparison], alpha: f64) -> String {
    let mut s = String::new();
    if comparisons.is_empty() {
        writeln!(s, "no comparisons; they need at least two providers with data").unwrap();
        return s;
    }
    writeln!(s, "{:<14} {:<12} {:<12} {:<8} {:>12} {:>7}  Magnitude", "Metric", "Model 1", "Model 2", "Result", "p", "A12")
        .unwrap();
    for c in comparisons {
        if c.pairs.is_empty() {
            writeln!(
                s,
                "{:<14} no difference among {} (H = {:.4}, p = {:.4e} >= {alpha})",
                c.metric,
                c.groups.join(", "),
                c.omnibus.h,
                c.omnibus.p
            )
            .unwrap();
        }
        for p in &c.pairs {
            writeln!(
                s,
                "{:<14} {:<12} {:<12} {:<8} {:>12.4e} {:>7.4}  {}",
                c.metric,
                p.group1,
                p.group2,
                p.verdict.to_string(),
                p.p_adjusted,
                p.effect.a12,
                p.effect.magnitude.as_str()
            )
            .unwrap();
        }
    }
    s
}

pub fn render_text(r: &Report) -> String {
    let mut s = String::new();
    writeln!(s, "Run seed {}  alpha {}", r.seed, r.alpha).unwrap();
    writeln!(s, "{} rules, {} mutants", r.rules, r.mutants).unwrap();
    let ops: Vec<String> = r.mutants_by_operator.iter().map(|(k, v)| format!("{k} {v}")).collect();
    writeln!(s, "Mutants by operator: {}", if ops.is_empty() { "-".into() } else { ops.join(", ") }).unwrap();

    writeln!(s, "\nGeneration").unwrap();
    for g in &r.generation {
        writeln!(
            s,
            "{}: {} requests, {} exact matches, {} transport failures",
            g.provider, g.requests, g.exact_matches, g.transport_failures
        )
        .unwrap();
        for (label, n) in g.hallucinations.iter().filter(|(_, n)| **n > 0) {
            writeln!(s, "  {label}: {n}").unwrap();
        }
    }

    for l in &r.ledgers {
        writeln!(s).unwrap();
        s.push_str(&render_ledger(l));
    }
    if r.skipped_tests > 0 {
        writeln!(s, "{} tests could not be executed", r.skipped_tests).unwrap();
    }

    writeln!(s, "\nMetrics (original rules)").unwrap();
    writeln!(s, "{:<14} {:<12} {:>5} {:>9} {:>9}", "Metric", "Provider", "n", "Mean", "Median").unwrap();
    for m in &r.metrics {
        writeln!(s, "{:<14} {:<12} {:>5} {:>9.3} {:>9.3}", m.metric, m.provider, m.n, m.mean, m.median).unwrap();
    }

    writeln!(s, "\nComparisons").unwrap();
    s.push_str(&render_comparisons(&r.comparisons, r.alpha));
    s
}

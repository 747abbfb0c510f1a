//! Nonparametric comparison of metric distributions between providers.

pub mod special;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::metrics::{MetricRow, RuleKind};
use crate::testgen::TestIntent;

pub const DEFAULT_ALPHA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("need at least two groups, got {0}")]
    TooFewGroups(usize),
    #[error("group {0:?} has no observations")]
    EmptyGroup(String),
    #[error("empty sample")]
    EmptySample,
    #[error("observation {value} in group {group:?} is not finite")]
    NotFinite { group: String, value: String },
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGroup {
    pub label: String,
    pub observations: Vec<f64>,
}

impl SampleGroup {
    pub fn new(label: impl Into<String>, observations: Vec<f64>) -> Self {
        SampleGroup { label: label.into(), observations }
    }
}

fn check(groups: &[SampleGroup]) -> Result<(), StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    for g in groups {
        if g.observations.is_empty() {
            return Err(StatsError::EmptyGroup(g.label.clone()));
        }
        if let Some(v) = g.observations.iter().find(|v| !v.is_finite()) {
            return Err(StatsError::NotFinite { group: g.label.clone(), value: v.to_string() });
        }
    }
    Ok(())
}

/// Mid-ranks (1-based) of `values` and the tie term Σ(t³ − t) over tied blocks.
pub fn mid_ranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    (ranks, ties)
}

struct Pooled {
    n: f64,
    ties: f64,
    mean_ranks: Vec<f64>,
    sizes: Vec<f64>,
}

fn pool(groups: &[SampleGroup]) -> Pooled {
    let all: Vec<f64> = groups.iter().flat_map(|g| g.observations.iter().copied()).collect();
    let (ranks, ties) = mid_ranks(&all);
    let mut mean_ranks = Vec::with_capacity(groups.len());
    let mut at = 0;
    for g in groups {
        let n = g.observations.len();
        mean_ranks.push(ranks[at..at + n].iter().sum::<f64>() / n as f64);
        at += n;
    }
    Pooled {
        n: all.len() as f64,
        ties,
        mean_ranks,
        sizes: groups.iter().map(|g| g.observations.len() as f64).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KruskalWallis {
    pub h: f64,
    pub df: usize,
    pub p: f64,
}

/// Tie-corrected H with a chi-squared p-value. All-equal data gives H = 0, p = 1.
pub fn kruskal_wallis(groups: &[SampleGroup]) -> Result<KruskalWallis, StatsError> {
    check(groups)?;
    let p = pool(groups);
    let df = groups.len() - 1;
    let correction = 1.0 - p.ties / (p.n.powi(3) - p.n);
    if correction <= 0.0 {
        return Ok(KruskalWallis { h: 0.0, df, p: 1.0 });
    }
    let sum: f64 = p.mean_ranks.iter().zip(&p.sizes).map(|(r, n)| n * (r * r)).sum();
    let h = (12.0 / (p.n * (p.n + 1.0)) * sum - 3.0 * (p.n + 1.0)) / correction;
    let h = h.max(0.0);
    Ok(KruskalWallis { h, df, p: special::chi_squared_sf(h, df as f64) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl Magnitude {
    /// Band of the absolute scaled effect |2·Â₁₂ − 1|.
    pub fn of_scaled(scaled: f64) -> Self {
        match scaled.abs() {
            s if s < 0.147 => Magnitude::Negligible,
            s if s < 0.33 => Magnitude::Small,
            s if s < 0.474 => Magnitude::Medium,
            _ => Magnitude::Large,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Magnitude::Negligible => "negligible",
            Magnitude::Small => "small",
            Magnitude::Medium => "medium",
            Magnitude::Large => "large",
        }
    }
}

impl fmt::Display for Magnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub a12: f64,
    pub scaled: f64,
    pub magnitude: Magnitude,
}

impl EffectSize {
    pub fn from_a12(a12: f64) -> Self {
        let scaled = (a12 - 0.5) * 2.0;
        EffectSize { a12, scaled, magnitude: Magnitude::of_scaled(scaled) }
    }
}

/// Vargha-Delaney Â₁₂: the probability that a draw from `a` exceeds one from `b`, ties counting half.
pub fn vda(a: &[f64], b: &[f64]) -> Result<EffectSize, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, _) = mid_ranks(&all);
    let m = a.len() as f64;
    let n = b.len() as f64;
    let r1: f64 = ranks[..a.len()].iter().sum();
    Ok(EffectSize::from_a12((r1 / m - (m + 1.0) / 2.0) / n))
}

/// Benjamini-Yekutieli step-up adjustment. Output is in input order.
pub fn benjamini_yekutieli(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    if m == 0 {
        return Vec::new();
    }
    let harmonic: f64 = (1..=m).map(|i| 1.0 / i as f64).sum();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = f64::INFINITY;
    for (rank, &i) in order.iter().enumerate().rev() {
        let v = p[i] * m as f64 * harmonic / (rank + 1) as f64;
        running = running.min(v);
        adjusted[i] = running.min(1.0);
    }
    adjusted
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Better,
    Worse,
    Equal,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Better => "better",
            Verdict::Worse => "worse",
            Verdict::Equal => "equal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub group1: String,
    pub group2: String,
    pub z: f64,
    pub p: f64,
    pub p_adjusted: f64,
    pub effect: EffectSize,
    /// How group1 compares with group2.
    pub verdict: Verdict,
}

/// Dunn's test on every pair (in group order) with tie-corrected z and BY-adjusted p.
pub fn dunn_posthoc(groups: &[SampleGroup], alpha: f64) -> Result<Vec<PairwiseComparison>, StatsError> {
    check(groups)?;
    let pooled = pool(groups);
    let variance = pooled.n * (pooled.n + 1.0) / 12.0 - pooled.ties / (12.0 * (pooled.n - 1.0));
    let mut rows = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let se = (variance * (1.0 / pooled.sizes[i] + 1.0 / pooled.sizes[j])).sqrt();
            let diff = pooled.mean_ranks[i] - pooled.mean_ranks[j];
            let z = if se > 0.0 { diff / se } else { 0.0 };
            let p = (2.0 * special::normal_sf(z.abs())).min(1.0);
            rows.push(PairwiseComparison {
                group1: groups[i].label.clone(),
                group2: groups[j].label.clone(),
                z,
                p,
                p_adjusted: p,
                effect: vda(&groups[i].observations, &groups[j].observations)?,
                verdict: Verdict::Equal,
            });
        }
    }
    let raw: Vec<f64> = rows.iter().map(|r| r.p).collect();
    for (row, adj) in rows.iter_mut().zip(benjamini_yekutieli(&raw)) {
        row.p_adjusted = adj;
        row.verdict = verdict(adj, alpha, &row.effect);
    }
    Ok(rows)
}

/// Significant and non-negligible differences decide a direction; everything else is equal.
pub fn verdict(p: f64, alpha: f64, effect: &EffectSize) -> Verdict {
    if p >= alpha || effect.magnitude == Magnitude::Negligible {
        Verdict::Equal
    } else if effect.a12 > 0.5 {
        Verdict::Better
    } else {
        Verdict::Worse
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: String,
    pub groups: Vec<String>,
    pub omnibus: KruskalWallis,
    /// Empty unless the omnibus test rejects at `alpha`.
    pub pairs: Vec<PairwiseComparison>,
}

pub fn compare_all(metric: &str, groups: &[SampleGroup], alpha: f64) -> Result<Comparison, StatsError> {
    let omnibus = kruskal_wallis(groups)?;
    let pairs = if omnibus.p < alpha { dunn_posthoc(groups, alpha)? } else { Vec::new() };
    Ok(Comparison {
        metric: metric.to_string(),
        groups: groups.iter().map(|g| g.label.clone()).collect(),
        omnibus,
        pairs,
    })
}

/// Metric names accepted by [`metric_groups`]: `CR` and `SI_`/`RI_` with a test type suffix.
pub fn metric_names() -> Vec<String> {
    let mut names = vec!["CR".to_string()];
    for prefix in ["SI", "RI"] {
        for intent in TestIntent::ALL {
            names.push(format!("{prefix}_{}", metric_suffix(intent)));
        }
    }
    names
}

fn metric_suffix(intent: TestIntent) -> &'static str {
    match intent {
        TestIntent::Satisfying => "pass",
        TestIntent::Violating => "fail",
        TestIntent::Invalid => "notapplied",
    }
}

/// One group per provider holding the metric's value for every original rule.
/// CR does not depend on the test type and is taken once per rule.
pub fn metric_groups(rows: &[MetricRow], metric: &str) -> Result<Vec<SampleGroup>, StatsError> {
    let unknown = || StatsError::UnknownMetric(metric.to_string());
    let (prefix, intent) = match metric.split_once('_') {
        None if metric == "CR" => ("CR", TestIntent::Satisfying),
        Some((p @ ("SI" | "RI"), suffix)) => {
            (p, TestIntent::ALL.into_iter().find(|i| metric_suffix(*i) == suffix).ok_or_else(unknown)?)
        }
        _ => return Err(unknown()),
    };
    let mut by_provider: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.kind == RuleKind::Original && r.intent == intent) {
        let value = match prefix {
            "CR" => Some(r.cr),
            "SI" => Some(r.si),
            _ => r.ri,
        };
        let entry = by_provider.entry(&r.provider).or_default();
        entry.extend(value);
    }
    Ok(by_provider.into_iter().map(|(p, v)| SampleGroup::new(p, v)).collect())
}

/// Comparisons for several metrics at once; metrics with fewer than two non-empty groups are skipped.
pub fn compare_metrics(
    rows: &[MetricRow],
    metrics: &[String],
    alpha: f64,
    exec: Execution,
) -> Result<Vec<Comparison>, StatsError> {
    let groups: Vec<(String, Vec<SampleGroup>)> = metrics
        .iter()
        .map(|m| {
            let g: Vec<SampleGroup> =
                metric_groups(rows, m)?.into_iter().filter(|g| !g.observations.is_empty()).collect();
            Ok((m.clone(), g))
        })
        .collect::<Result<_, StatsError>>()?;
    let usable: Vec<&(String, Vec<SampleGroup>)> = groups.iter().filter(|(_, g)| g.len() >= 2).collect();
    exec.map(&usable, |(m, g)| compare_all(m, g, alpha)).into_iter().collect()
}

/// Pairwise rows shaped like a model comparison table.
pub fn stats_csv(comparisons: &[Comparison]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "model1", "model2", "comparison", "p", "A12", "magnitude"])
        .expect("in-memory write");
    for c in comparisons {
        for p in &c.pairs {
            w.write_record([
                c.metric.clone(),
                p.group1.clone(),
                p.group2.clone(),
                p.verdict.to_string(),
                format!("{:.6e}", p.p_adjusted),
                format!("{:.4}", p.effect.a12),
                p.effect.magnitude.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn groups(data: &[&[f64]]) -> Vec<SampleGroup> {
        data.iter().enumerate().map(|(i, d)| SampleGroup::new(format!("g{i}"), d.to_vec())).collect()
    }

    #[test]
    fn kruskal_wallis_examples() {
        let kw = kruskal_wallis(&groups(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[7.0, 8.0, 9.0]])).unwrap();
        assert!((kw.h - 7.2).abs() < 1e-9);
        assert_eq!(kw.df, 2);
        let same = kruskal_wallis(&groups(&[&[3.0, 3.0], &[3.0, 3.0]])).unwrap();
        assert_eq!((same.h, same.p), (0.0, 1.0));
        assert_eq!(kruskal_wallis(&groups(&[&[1.0]])), Err(StatsError::TooFewGroups(1)));
        assert!(matches!(kruskal_wallis(&groups(&[&[1.0], &[]])), Err(StatsError::EmptyGroup(_))));
    }

    #[test]
    fn mid_ranks_and_ties() {
        let (r, t) = mid_ranks(&[10.0, 20.0, 10.0, 30.0]);
        assert_eq!(r, [1.5, 3.0, 1.5, 4.0]);
        assert_eq!(t, 6.0);
    }

    #[test]
    fn effect_size_examples() {
        let e = vda(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((e.a12, e.magnitude), (0.5, Magnitude::Negligible));
        assert_eq!(vda(&[5.0], &[1.0, 2.0]).unwrap().a12, 1.0);
        assert_eq!(vda(&[], &[1.0]), Err(StatsError::EmptySample));
        for (a12, m) in [(0.0586, Magnitude::Large), (0.303, Magnitude::Medium), (0.456, Magnitude::Negligible)] {
            assert_eq!(EffectSize::from_a12(a12).magnitude, m, "{a12}");
        }
        assert_eq!(EffectSize::from_a12(0.5 + 0.147 / 2.0).magnitude, Magnitude::Small);
    }

    #[test]
    fn by_adjustment() {
        assert_eq!(benjamini_yekutieli(&[0.2, 0.2, 0.2]), vec![0.2 * 11.0 / 6.0; 3]);
        assert_eq!(benjamini_yekutieli(&[0.9, 0.9]), [1.0, 1.0]);
        assert!(benjamini_yekutieli(&[]).is_empty());
    }

    #[test]
    fn identical_groups_are_never_different() {
        let rows = dunn_posthoc(&groups(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]]), 0.01).unwrap();
        assert_eq!(rows[0].p_adjusted, 1.0);
        assert_eq!(rows[0].verdict, Verdict::Equal);
    }

    #[test]
    fn compare_all_gates_on_the_omnibus() {
        let weak = groups(&[&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]]);
        assert!(compare_all("m", &weak, 0.01).unwrap().pairs.is_empty());
        let hi: Vec<f64> = (0..30).map(|i| 100.0 + i as f64).collect();
        let lo: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let c = compare_all("m", &[SampleGroup::new("hi", hi), SampleGroup::new("lo", lo)], 0.01).unwrap();
        assert_eq!(c.pairs.len(), 1);
        assert_eq!(c.pairs[0].verdict, Verdict::Better);
        assert_eq!(c.pairs[0].effect.magnitude, Magnitude::Large);
        assert!(stats_csv(&[c]).contains("m,hi,lo,better,"));
    }

    #[test]
    fn significant_but_negligible_is_equal() {
        let e = EffectSize::from_a12(0.52);
        assert_eq!(verdict(1e-6, 0.01, &e), Verdict::Equal);
        assert_eq!(verdict(1e-6, 0.01, &EffectSize::from_a12(0.1)), Verdict::Worse);
    }

    #[test]
    fn metric_name_parsing() {
        assert_eq!(metric_names().len(), 7);
        assert!(metric_groups(&[], "SI_pass").unwrap().is_empty());
        assert!(metric_groups(&[], "XX").is_err());
        assert!(metric_groups(&[], "SI_maybe").is_err());
    }
}

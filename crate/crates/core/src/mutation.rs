//! First-order mutation of rule expressions.
//!
//! A site is a path of child indices from the root. Binary connectives number
//! their operands 0 and 1, `not` has child 0, a comparison has its operands at
//! 0 and 1, and an inclusion has its term at 0 followed by list items from 1.

use std::fmt;
use std::str::FromStr;

use chrono::{Days, Months, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::rule::{CmpOp, Expr, InclusionOp, Literal, Rule, RuleKey, StringOp, Term};

pub type SitePath = Vec<u32>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MutationOperator {
    /// Swap `<` with `>` and `<=` with `>=`.
    #[serde(rename = "ACO")]
    Aco,
    /// Shift a date literal by one year, month or day.
    #[serde(rename = "AD")]
    Ad,
    /// Swap `and` with `or`.
    #[serde(rename = "CO")]
    Co,
    /// Swap `=` with `!=`.
    #[serde(rename = "NI")]
    Ni,
    /// Swap `in` with `notIn`.
    #[serde(rename = "RI")]
    Ri,
    /// Swap `startswith` with `endswith`.
    #[serde(rename = "RSE")]
    Rse,
    /// Swap the operands of an `implies`.
    #[serde(rename = "SR")]
    Sr,
    /// Swap the two indices of a `substring` call.
    #[serde(rename = "SSI")]
    Ssi,
}

impl MutationOperator {
    pub const ALL: [MutationOperator; 8] = [
        MutationOperator::Aco,
        MutationOperator::Ad,
        MutationOperator::Co,
        MutationOperator::Ni,
        MutationOperator::Ri,
        MutationOperator::Rse,
        MutationOperator::Sr,
        MutationOperator::Ssi,
    ];

    pub fn code(self) -> &'static str {
        match self {
            MutationOperator::Aco => "ACO",
            MutationOperator::Ad => "AD",
            MutationOperator::Co => "CO",
            MutationOperator::Ni => "NI",
            MutationOperator::Ri => "RI",
            MutationOperator::Rse => "RSE",
            MutationOperator::Sr => "SR",
            MutationOperator::Ssi => "SSI",
        }
    }

    pub fn variants(self) -> &'static [Option<DateDelta>] {
        const NONE: [Option<DateDelta>; 1] = [None];
        const DATES: [Option<DateDelta>; 6] = [
            Some(DateDelta::PlusYear),
            Some(DateDelta::MinusYear),
            Some(DateDelta::PlusMonth),
            Some(DateDelta::MinusMonth),
            Some(DateDelta::PlusDay),
            Some(DateDelta::MinusDay),
        ];
        match self {
            MutationOperator::Ad => &DATES,
            _ => &NONE,
        }
    }
}

impl fmt::Display for MutationOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for MutationOperator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MutationOperator::ALL
            .into_iter()
            .find(|op| op.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown mutation operator {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DateDelta {
    #[serde(rename = "+1y")]
    PlusYear,
    #[serde(rename = "-1y")]
    MinusYear,
    #[serde(rename = "+1m")]
    PlusMonth,
    #[serde(rename = "-1m")]
    MinusMonth,
    #[serde(rename = "+1d")]
    PlusDay,
    #[serde(rename = "-1d")]
    MinusDay,
}

impl DateDelta {
    pub fn tag(self) -> &'static str {
        match self {
            DateDelta::PlusYear => "+1y",
            DateDelta::MinusYear => "-1y",
            DateDelta::PlusMonth => "+1m",
            DateDelta::MinusMonth => "-1m",
            DateDelta::PlusDay => "+1d",
            DateDelta::MinusDay => "-1d",
        }
    }

    /// Calendar shift; month and year shifts clamp to the last valid day of the target month.
    pub fn apply(self, date: NaiveDate) -> Option<NaiveDate> {
        match self {
            DateDelta::PlusYear => date.checked_add_months(Months::new(12)),
            DateDelta::MinusYear => date.checked_sub_months(Months::new(12)),
            DateDelta::PlusMonth => date.checked_add_months(Months::new(1)),
            DateDelta::MinusMonth => date.checked_sub_months(Months::new(1)),
            DateDelta::PlusDay => date.checked_add_days(Days::new(1)),
            DateDelta::MinusDay => date.checked_sub_days(Days::new(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MutationError {
    #[error("{op} is not applicable at site {site:?}")]
    InvalidSite { op: MutationOperator, site: SitePath },
    #[error("{op} does not accept variant {variant:?}")]
    InvalidVariant { op: MutationOperator, variant: Option<DateDelta> },
    #[error("shifting {date} by {delta:?} leaves the supported calendar range")]
    DateOutOfRange { date: NaiveDate, delta: DateDelta },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mutant {
    pub source: RuleKey,
    pub operator: MutationOperator,
    pub site: SitePath,
    pub site_index: usize,
    pub variant: Option<DateDelta>,
    /// The mutated rule. Its id carries the mutation tag; version and active flag follow the source.
    pub rule: Rule,
}

impl Mutant {
    pub fn info(&self) -> MutantInfo {
        MutantInfo {
            mutant_id: self.rule.id.clone(),
            version: self.rule.version,
            source_id: self.source.id.clone(),
            operator: self.operator,
            site: self.site.clone(),
            variant: self.variant,
        }
    }
}

/// Serialisable link between a mutant and the rule it was derived from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutantInfo {
    pub mutant_id: String,
    pub version: u32,
    pub source_id: String,
    pub operator: MutationOperator,
    pub site: SitePath,
    pub variant: Option<DateDelta>,
}

impl MutantInfo {
    pub fn key(&self) -> RuleKey {
        RuleKey::new(&self.mutant_id, self.version)
    }

    pub fn source_key(&self) -> RuleKey {
        RuleKey::new(&self.source_id, self.version)
    }
}

pub fn mutant_id(source_id: &str, op: MutationOperator, site_index: usize, variant: Option<DateDelta>) -> String {
    match variant {
        Some(d) => format!("{source_id}#{op}-{site_index}-{}", d.tag()),
        None => format!("{source_id}#{op}-{site_index}"),
    }
}

enum Node<'a> {
    Expr(&'a Expr),
    Term(&'a Term),
    Item(&'a Literal),
}

fn walk<'a>(expr: &'a Expr, path: &mut SitePath, out: &mut Vec<(SitePath, Node<'a>)>) {
    out.push((path.clone(), Node::Expr(expr)));
    let child = |path: &mut SitePath, i: u32, node: Node<'a>, out: &mut Vec<(SitePath, Node<'a>)>| {
        path.push(i);
        match node {
            Node::Expr(e) => walk(e, path, out),
            leaf => out.push((path.clone(), leaf)),
        }
        path.pop();
    };
    match expr {
        Expr::And(a, b) | Expr::Or(a, b) | Expr::Implies(a, b) => {
            child(path, 0, Node::Expr(a), out);
            child(path, 1, Node::Expr(b), out);
        }
        Expr::Not(a) => child(path, 0, Node::Expr(a), out),
        Expr::Compare { lhs, rhs, .. } => {
            child(path, 0, Node::Term(lhs), out);
            child(path, 1, Node::Term(rhs), out);
        }
        Expr::Inclusion { term, list, .. } => {
            child(path, 0, Node::Term(term), out);
            for (i, lit) in list.iter().enumerate() {
                child(path, 1 + i as u32, Node::Item(lit), out);
            }
        }
        Expr::StringPredicate { .. } => {}
    }
}

fn applicable(op: MutationOperator, node: &Node<'_>) -> bool {
    use MutationOperator::*;
    match (op, node) {
        (Aco, Node::Expr(Expr::Compare { op, .. })) => op.is_ordering(),
        (Ni, Node::Expr(Expr::Compare { op, .. })) => !op.is_ordering(),
        (Co, Node::Expr(Expr::And(..) | Expr::Or(..))) => true,
        (Ri, Node::Expr(Expr::Inclusion { .. })) => true,
        (Rse, Node::Expr(Expr::StringPredicate { .. })) => true,
        (Sr, Node::Expr(Expr::Implies(l, r))) => l != r,
        (Ssi, Node::Term(Term::Substring { start, end, .. })) => start != end,
        (Ad, Node::Term(Term::Lit(Literal::Date(_)))) | (Ad, Node::Item(Literal::Date(_))) => true,
        _ => false,
    }
}

/// Every location where `op` applies, in pre-order.
pub fn sites(expr: &Expr, op: MutationOperator) -> Vec<SitePath> {
    let mut nodes = Vec::new();
    walk(expr, &mut Vec::new(), &mut nodes);
    nodes.into_iter().filter(|(_, n)| applicable(op, n)).map(|(p, _)| p).collect()
}

enum NodeMut<'a> {
    Expr(&'a mut Expr),
    Term(&'a mut Term),
    Item(&'a mut Literal),
}

fn node_mut<'a>(expr: &'a mut Expr, path: &[u32]) -> Option<NodeMut<'a>> {
    let Some((&first, rest)) = path.split_first() else {
        return Some(NodeMut::Expr(expr));
    };
    match expr {
        Expr::And(a, b) | Expr::Or(a, b) | Expr::Implies(a, b) => match first {
            0 => node_mut(a, rest),
            1 => node_mut(b, rest),
            _ => None,
        },
        Expr::Not(a) if first == 0 => node_mut(a, rest),
        Expr::Compare { lhs, rhs, .. } if rest.is_empty() => match first {
            0 => Some(NodeMut::Term(lhs)),
            1 => Some(NodeMut::Term(rhs)),
            _ => None,
        },
        Expr::Inclusion { term, list, .. } if rest.is_empty() => match first {
            0 => Some(NodeMut::Term(term)),
            i => list.get_mut(i as usize - 1).map(NodeMut::Item),
        },
        _ => None,
    }
}

/// Rewrites the node at `site` in place.
pub fn mutate_expr(
    expr: &Expr,
    op: MutationOperator,
    site: &[u32],
    variant: Option<DateDelta>,
) -> Result<Expr, MutationError> {
    use MutationOperator::*;
    if op.variants().iter().all(|v| *v != variant) {
        return Err(MutationError::InvalidVariant { op, variant });
    }
    let invalid = || MutationError::InvalidSite { op, site: site.to_vec() };
    let mut out = expr.clone();
    let node = node_mut(&mut out, site).ok_or_else(invalid)?;
    let shift = |date: &mut NaiveDate| -> Result<(), MutationError> {
        let delta = variant.expect("AD always has a variant");
        *date = delta.apply(*date).ok_or(MutationError::DateOutOfRange { date: *date, delta })?;
        Ok(())
    };
    match (op, node) {
        (Aco, NodeMut::Expr(Expr::Compare { op: cmp, .. })) if cmp.is_ordering() => {
            *cmp = match cmp {
                CmpOp::Lt => CmpOp::Gt,
                CmpOp::Gt => CmpOp::Lt,
                CmpOp::Le => CmpOp::Ge,
                _ => CmpOp::Le,
            };
        }
        (Ni, NodeMut::Expr(Expr::Compare { op: cmp, .. })) if !cmp.is_ordering() => {
            *cmp = if *cmp == CmpOp::Eq { CmpOp::Ne } else { CmpOp::Eq };
        }
        (Co, NodeMut::Expr(e @ (Expr::And(..) | Expr::Or(..)))) => {
            *e = match std::mem::replace(e, placeholder()) {
                Expr::And(a, b) => Expr::Or(a, b),
                Expr::Or(a, b) => Expr::And(a, b),
                _ => unreachable!(),
            };
        }
        (Ri, NodeMut::Expr(Expr::Inclusion { op: inc, .. })) => {
            *inc = match inc {
                InclusionOp::In => InclusionOp::NotIn,
                InclusionOp::NotIn => InclusionOp::In,
            };
        }
        (Rse, NodeMut::Expr(Expr::StringPredicate { op: s, .. })) => {
            *s = match s {
                StringOp::StartsWith => StringOp::EndsWith,
                StringOp::EndsWith => StringOp::StartsWith,
            };
        }
        (Sr, NodeMut::Expr(Expr::Implies(l, r))) if l != r => std::mem::swap(l, r),
        (Ssi, NodeMut::Term(Term::Substring { start, end, .. })) if start != end => std::mem::swap(start, end),
        (Ad, NodeMut::Term(Term::Lit(Literal::Date(d)))) | (Ad, NodeMut::Item(Literal::Date(d))) => shift(d)?,
        _ => return Err(invalid()),
    }
    Ok(out)
}

fn placeholder() -> Expr {
    Expr::StringPredicate { op: StringOp::StartsWith, var: String::new(), pattern: String::new() }
}

/// Builds a single mutant of `rule`.
pub fn apply(
    rule: &Rule,
    op: MutationOperator,
    site: &[u32],
    variant: Option<DateDelta>,
) -> Result<Mutant, MutationError> {
    if op.variants().iter().all(|v| *v != variant) {
        return Err(MutationError::InvalidVariant { op, variant });
    }
    let all = sites(&rule.expression, op);
    let site_index = all.iter().position(|s| s == site).ok_or_else(|| MutationError::InvalidSite {
        op,
        site: site.to_vec(),
    })?;
    let expression = mutate_expr(&rule.expression, op, site, variant)?;
    Ok(Mutant {
        source: rule.key(),
        operator: op,
        site: site.to_vec(),
        site_index,
        variant,
        rule: Rule {
            id: mutant_id(&rule.id, op, site_index, variant),
            version: rule.version,
            active: rule.active,
            expression,
        },
    })
}

/// All first-order mutants of one rule, ordered by operator, site and variant.
pub fn mutants_of(rule: &Rule) -> Vec<Mutant> {
    let mut out = Vec::new();
    for op in MutationOperator::ALL {
        for site in sites(&rule.expression, op) {
            for &variant in op.variants() {
                match apply(rule, op, &site, variant) {
                    Ok(m) => out.push(m),
                    Err(e) => log::warn!("skipping mutant of {}: {e}", rule.key()),
                }
            }
        }
    }
    out
}

pub fn mutate_all(rules: &[Rule], exec: Execution) -> Vec<Mutant> {
    exec.flat_map(rules, mutants_of)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule::parse;

    fn rule(text: &str) -> Rule {
        Rule::parse("R", 1, text).unwrap()
    }

    #[test]
    fn three_ands_give_three_co_sites() {
        let e = parse("A = 1 and B = 2 and C = 3 and D = 4 implies E = 5").unwrap();
        assert_eq!(sites(&e, MutationOperator::Co).len(), 3);
    }

    #[test]
    fn sr_needs_an_implication() {
        assert!(sites(&parse("A = 1 and B = 2").unwrap(), MutationOperator::Sr).is_empty());
    }

    #[test]
    fn ad_sites_include_list_items() {
        let e = parse("d < date('2020-01-01') implies e in [date('2020-01-01'), date('2021-01-01')]").unwrap();
        assert_eq!(sites(&e, MutationOperator::Ad), vec![vec![0, 1], vec![1, 1], vec![1, 2]]);
    }

    #[test]
    fn simple_rule_has_three_mutants() {
        let ms = mutants_of(&rule("A = 1 implies B = 2"));
        let ids: Vec<_> = ms.iter().map(|m| m.rule.id.as_str()).collect();
        assert_eq!(ids, ["R#NI-0", "R#NI-1", "R#SR-0"]);
        assert_eq!(ms[2].rule.text(), "B = 2 implies A = 1");
    }

    #[test]
    fn operator_rewrites() {
        let cases = [
            ("A = 1 and B = 1", MutationOperator::Co, "A = 1 or B = 1"),
            ("A = 1 or B = 1", MutationOperator::Co, "A = 1 and B = 1"),
            ("A > 1", MutationOperator::Aco, "A < 1"),
            ("A <= 1", MutationOperator::Aco, "A >= 1"),
            ("A != 1", MutationOperator::Ni, "A = 1"),
            ("t in ['a']", MutationOperator::Ri, "t notIn ['a']"),
            ("startswith(t, 'C')", MutationOperator::Rse, "endswith(t, 'C')"),
            ("substring(t, 1, 3) = 'abc'", MutationOperator::Ssi, "substring(t, 3, 1) = 'abc'"),
            ("A = 1 implies B = 1", MutationOperator::Sr, "B = 1 implies A = 1"),
        ];
        for (src, op, want) in cases {
            let r = rule(src);
            let site = &sites(&r.expression, op)[0];
            let once = apply(&r, op, site, None).unwrap().rule;
            assert_eq!(once.text(), want);
            assert_eq!(mutate_expr(&once.expression, op, site, None).unwrap(), r.expression, "{src}");
        }
    }

    #[test]
    fn ad_calendar_arithmetic() {
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).unwrap();
        assert_eq!(DateDelta::PlusDay.apply(d(2020, 1, 31)), Some(d(2020, 2, 1)));
        assert_eq!(DateDelta::PlusMonth.apply(d(2021, 1, 31)), Some(d(2021, 2, 28)));
        assert_eq!(DateDelta::PlusMonth.apply(d(2020, 1, 31)), Some(d(2020, 2, 29)));
        assert_eq!(DateDelta::MinusYear.apply(d(2020, 2, 29)), Some(d(2019, 2, 28)));
        assert_eq!(DateDelta::MinusDay.apply(d(2021, 3, 1)), Some(d(2021, 2, 28)));

        let r = rule("d < date('2020-01-31')");
        let ms = mutants_of(&r);
        assert_eq!(ms.len(), 6 + 1);
        assert_eq!(ms[0].rule.id, "R#ACO-0");
        assert_eq!(ms[5].rule.id, "R#AD-0-+1d");
        assert_eq!(ms[5].rule.text(), "d < date('2020-02-01')");
    }

    #[test]
    fn invalid_site_or_variant_is_rejected() {
        let r = rule("A = 1 implies B = 2");
        assert!(matches!(apply(&r, MutationOperator::Co, &[], None), Err(MutationError::InvalidSite { .. })));
        assert!(matches!(
            apply(&r, MutationOperator::Ni, &[0], Some(DateDelta::PlusDay)),
            Err(MutationError::InvalidVariant { .. })
        ));
        assert!(matches!(apply(&r, MutationOperator::Ad, &[0, 1], None), Err(MutationError::InvalidVariant { .. })));
    }

    #[test]
    fn degenerate_swaps_are_skipped() {
        assert!(sites(&parse("A = 1 implies A = 1").unwrap(), MutationOperator::Sr).is_empty());
        assert!(sites(&parse("substring(t, 2, 2) = 'a'").unwrap(), MutationOperator::Ssi).is_empty());
    }

    #[test]
    fn operator_codes_roundtrip() {
        for op in MutationOperator::ALL {
            assert_eq!(op.code().parse::<MutationOperator>().unwrap(), op);
            assert_eq!(serde_json::to_string(&op).unwrap(), format!("\"{op}\""));
        }
    }
}

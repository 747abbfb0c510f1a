//! Strict reading of model replies and classification of the ways they go wrong.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::rule::TriState;

pub type TestCase = serde_json::Map<String, serde_json::Value>;

/// The three kinds of test requested for each rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestIntent {
    Satisfying,
    Violating,
    Invalid,
}

impl TestIntent {
    pub const ALL: [TestIntent; 3] = [TestIntent::Satisfying, TestIntent::Violating, TestIntent::Invalid];

    pub fn key(self) -> &'static str {
        match self {
            TestIntent::Satisfying => "satisfying_case",
            TestIntent::Violating => "violating_case",
            TestIntent::Invalid => "invalid_case",
        }
    }

    /// The outcome a correct test of this kind produces.
    pub fn expected(self) -> TriState {
        match self {
            TestIntent::Satisfying => TriState::Pass,
            TestIntent::Violating => TriState::Fail,
            TestIntent::Invalid => TriState::NotApplied,
        }
    }

    pub fn from_tri(t: TriState) -> Self {
        match t {
            TriState::Pass => TestIntent::Satisfying,
            TriState::Fail => TestIntent::Violating,
            TriState::NotApplied => TestIntent::Invalid,
        }
    }
}

impl fmt::Display for TestIntent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.expected().as_str())
    }
}

pub const CONFIDENCE_KEY: &str = "confidence_score";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedTestSet {
    pub satisfying_case: TestCase,
    pub violating_case: TestCase,
    pub invalid_case: TestCase,
    /// Normalised to [0, 1]; values above 1 are read as percentages.
    pub confidence_score: f64,
}

impl GeneratedTestSet {
    pub fn case(&self, intent: TestIntent) -> &TestCase {
        match intent {
            TestIntent::Satisfying => &self.satisfying_case,
            TestIntent::Violating => &self.violating_case,
            TestIntent::Invalid => &self.invalid_case,
        }
    }

    pub fn case_mut(&mut self, intent: TestIntent) -> &mut TestCase {
        match intent {
            TestIntent::Satisfying => &mut self.satisfying_case,
            TestIntent::Violating => &mut self.violating_case,
            TestIntent::Invalid => &mut self.invalid_case,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum JsonDefect {
    UnquotedNames,
    MissingPairs,
    WrongStructure,
    MissingDelimiters,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "category", content = "subkind")]
pub enum Hallucination {
    SemanticAlteration,
    MissingTestTypes,
    AdditionalTests,
    LackOfIntegration,
    InvalidJson(JsonDefect),
}

impl Hallucination {
    pub const ALL: [Hallucination; 8] = [
        Hallucination::SemanticAlteration,
        Hallucination::MissingTestTypes,
        Hallucination::AdditionalTests,
        Hallucination::LackOfIntegration,
        Hallucination::InvalidJson(JsonDefect::UnquotedNames),
        Hallucination::InvalidJson(JsonDefect::MissingPairs),
        Hallucination::InvalidJson(JsonDefect::WrongStructure),
        Hallucination::InvalidJson(JsonDefect::MissingDelimiters),
    ];

    pub fn label(self) -> &'static str {
        match self {
            Hallucination::SemanticAlteration => "semanticAlteration",
            Hallucination::MissingTestTypes => "missingTestTypes",
            Hallucination::AdditionalTests => "additionalTests",
            Hallucination::LackOfIntegration => "lackOfIntegration",
            Hallucination::InvalidJson(JsonDefect::UnquotedNames) => "invalidJson/unquotedNames",
            Hallucination::InvalidJson(JsonDefect::MissingPairs) => "invalidJson/missingPairs",
            Hallucination::InvalidJson(JsonDefect::WrongStructure) => "invalidJson/wrongStructure",
            Hallucination::InvalidJson(JsonDefect::MissingDelimiters) => "invalidJson/missingDelimiters",
        }
    }
}

impl fmt::Display for Hallucination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Removes a surrounding Markdown code fence, if any.
fn strip_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let body = match rest.find('\n') {
        Some(i) => &rest[i + 1..],
        None => rest,
    };
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

fn levenshtein(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, cb) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(ca != *cb)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

/// `<case>_<n>`, `<case><n>` and similar numbered repeats of an expected case key.
fn is_numbered_repeat(key: &str) -> bool {
    TestIntent::ALL.iter().any(|i| {
        key.strip_prefix(i.key())
            .map(|rest| {
                let digits = rest.trim_start_matches(['_', '-', ' ']);
                !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit())
            })
            .unwrap_or(false)
    })
}

fn is_near_variant(extra: &str, expected: &str) -> bool {
    extra != expected && !is_numbered_repeat(extra) && levenshtein(&extra.to_lowercase(), expected) <= 3
}

fn classify_object(obj: &serde_json::Map<String, serde_json::Value>) -> Result<GeneratedTestSet, Hallucination> {
    let expected: Vec<&str> = TestIntent::ALL.iter().map(|i| i.key()).chain([CONFIDENCE_KEY]).collect();
    let keys: BTreeSet<&str> = obj.keys().map(String::as_str).collect();
    let missing: Vec<&str> = expected.iter().copied().filter(|k| !keys.contains(k)).collect();
    let extra: Vec<&str> = keys.iter().copied().filter(|k| !expected.contains(k)).collect();

    if missing.iter().any(|m| extra.iter().any(|e| is_near_variant(e, m))) {
        return Err(Hallucination::SemanticAlteration);
    }
    if TestIntent::ALL.iter().any(|i| missing.contains(&i.key())) {
        return Err(Hallucination::MissingTestTypes);
    }
    if extra.iter().any(|e| is_numbered_repeat(e) || e.contains("case")) {
        return Err(Hallucination::AdditionalTests);
    }
    if !extra.is_empty() {
        return Err(Hallucination::InvalidJson(JsonDefect::WrongStructure));
    }

    let mut cases = Vec::with_capacity(3);
    for intent in TestIntent::ALL {
        match &obj[intent.key()] {
            serde_json::Value::Object(case) if case.values().all(|v| !v.is_object() && !v.is_array()) => {
                cases.push(case.clone())
            }
            _ => return Err(Hallucination::InvalidJson(JsonDefect::WrongStructure)),
        }
    }
    let confidence = match obj.get(CONFIDENCE_KEY) {
        None => return Err(Hallucination::InvalidJson(JsonDefect::MissingPairs)),
        Some(v) => v.as_f64().ok_or(Hallucination::InvalidJson(JsonDefect::WrongStructure))?,
    };
    let invalid_case = cases.pop().unwrap();
    let violating_case = cases.pop().unwrap();
    let satisfying_case = cases.pop().unwrap();
    Ok(GeneratedTestSet {
        satisfying_case,
        violating_case,
        invalid_case,
        confidence_score: normalize_confidence(confidence),
    })
}

pub fn normalize_confidence(c: f64) -> f64 {
    if c > 1.0 {
        c / 100.0
    } else {
        c
    }
}

/// Byte offset of a 1-based line and column as reported by serde_json.
fn offset_of(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

fn char_at(text: &str, offset: usize) -> Option<char> {
    text.get(offset..).and_then(|s| s.chars().next())
}

fn prev_significant(text: &str, offset: usize) -> Option<char> {
    text.get(..offset).and_then(|s| s.trim_end().chars().last())
}

fn classify_syntax_error(text: &str, err: &serde_json::Error) -> JsonDefect {
    let msg = err.to_string();
    let offset = offset_of(text, err.line(), err.column());
    let at = char_at(text, offset);
    let names_token = |c: Option<char>| matches!(c, Some(c) if c.is_alphanumeric() || c == '\'' || c == '_');

    if err.is_eof() || msg.starts_with("expected `:`") || msg.starts_with("expected `,` or") {
        return JsonDefect::MissingDelimiters;
    }
    if msg.starts_with("trailing comma") {
        return JsonDefect::MissingPairs;
    }
    if msg.starts_with("key must be a string") || msg.starts_with("expected value") || msg.starts_with("expected ident")
    {
        if names_token(at) {
            return JsonDefect::UnquotedNames;
        }
        if matches!(at, Some(':' | ',' | '}' | ']')) || matches!(prev_significant(text, offset), Some(':' | ',')) {
            return JsonDefect::MissingPairs;
        }
    }
    JsonDefect::WrongStructure
}

/// Reads a reply as a test set or names the first hallucination category it shows.
pub fn parse_response(text: &str) -> Result<GeneratedTestSet, Hallucination> {
    let body = strip_fence(text);
    match serde_json::from_str::<serde_json::Value>(body) {
        Ok(serde_json::Value::Object(obj)) => classify_object(&obj),
        Ok(_) => Err(Hallucination::InvalidJson(JsonDefect::WrongStructure)),
        Err(err) => {
            let values: Result<Vec<serde_json::Value>, _> =
                serde_json::Deserializer::from_str(body).into_iter::<serde_json::Value>().collect();
            match values {
                Ok(vs) if vs.len() > 1 => Err(Hallucination::LackOfIntegration),
                _ => Err(Hallucination::InvalidJson(classify_syntax_error(body, &err))),
            }
        }
    }
}

pub fn exact_match(outcome: &Result<GeneratedTestSet, Hallucination>) -> bool {
    outcome.is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{"satisfying_case": {"A": 1, "B": 2}, "violating_case": {"A": 1, "B": 3},
        "invalid_case": {"A": 0, "B": 2}, "confidence_score": 90}"#;

    #[test]
    fn well_formed_reply_parses() {
        let set = parse_response(GOOD).unwrap();
        assert_eq!(set.satisfying_case["B"], 2);
        assert_eq!(set.confidence_score, 0.9);
        assert!(exact_match(&Ok(set)));
    }

    #[test]
    fn code_fences_are_tolerated() {
        assert!(parse_response(&format!("```json\n{GOOD}\n```")).is_ok());
    }

    #[test]
    fn examples() {
        let alt = GOOD.replace("violating_case", "violation_case");
        assert_eq!(parse_response(&alt), Err(Hallucination::SemanticAlteration));
        let two = r#"{"satisfying_case": {"A": 1}, "violating_case": {"A": 2}}"#;
        assert_eq!(parse_response(two), Err(Hallucination::MissingTestTypes));
        let list = r#"[{"A": 1}, {"A": 2}, {"A": 3}]"#;
        assert_eq!(parse_response(list), Err(Hallucination::InvalidJson(JsonDefect::WrongStructure)));
        assert!(!exact_match(&parse_response(list)));
    }

    #[test]
    fn levenshtein_distances() {
        assert_eq!(levenshtein("violation_case", "violating_case"), 2);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
    }

    #[test]
    fn confidence_normalisation() {
        assert_eq!(normalize_confidence(85.0), 0.85);
        assert_eq!(normalize_confidence(0.4), 0.4);
        assert_eq!(normalize_confidence(1.0), 1.0);
    }

    #[test]
    fn hallucination_serialisation() {
        let h = Hallucination::InvalidJson(JsonDefect::MissingPairs);
        let v = serde_json::to_value(h).unwrap();
        assert_eq!(v, serde_json::json!({"category": "invalidJson", "subkind": "missingPairs"}));
        assert_eq!(serde_json::from_value::<Hallucination>(v).unwrap(), h);
        let v = serde_json::to_value(Hallucination::AdditionalTests).unwrap();
        assert_eq!(v, serde_json::json!({"category": "additionalTests"}));
    }
}

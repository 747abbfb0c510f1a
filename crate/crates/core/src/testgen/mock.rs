//! Offline completion provider driven by a scenario file.
//!
//! Replies are built from brute-force witnesses for the rule and then
//! deliberately damaged according to the behavior drawn for each request.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use super::{CompletionProvider, CompletionRequest, ProviderError, TestCase, TestIntent, CONFIDENCE_KEY};
use crate::corpus::find_witnesses;
use crate::rule::{DateStyle, Record, Rule, RuleKey, Schema, TriState, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Behavior {
    /// Witnesses for all three outcomes.
    Correct,
    /// Well-formed, but the satisfying and violating cases are swapped.
    NearMiss,
    /// Correct cases with day-first dates.
    DateDrift,
    SemanticAlteration,
    MissingTestTypes,
    AdditionalTests,
    LackOfIntegration,
    UnquotedNames,
    MissingPairs,
    WrongStructure,
    MissingDelimiters,
    TransportFailure,
}

fn default_name() -> String {
    "mock".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub combined: bool,
    /// Relative weights of behaviors for requests without a script. Empty means always correct.
    #[serde(default)]
    pub mix: BTreeMap<Behavior, f64>,
    /// Behavior per repetition for specific rules, keyed by `id` or `id/version`, cycled when shorter than the run.
    #[serde(default)]
    pub rules: BTreeMap<String, Vec<Behavior>>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario { name: default_name(), combined: false, mix: BTreeMap::new(), rules: BTreeMap::new() }
    }
}

impl Scenario {
    fn scripted(&self, key: &RuleKey, repetition: u32) -> Option<Behavior> {
        let script = self.rules.get(&key.to_string()).or_else(|| self.rules.get(&key.id))?;
        if script.is_empty() {
            return None;
        }
        Some(script[(repetition as usize - 1) % script.len()])
    }
}

pub struct MockProvider {
    scenario: Scenario,
    schema: Schema,
    mix: Option<(Vec<Behavior>, WeightedIndex<f64>)>,
    witnesses: Mutex<HashMap<RuleKey, [Record; 3]>>,
}

impl MockProvider {
    pub fn new(scenario: Scenario, schema: Schema) -> Result<Self, ProviderError> {
        let mix = if scenario.mix.is_empty() {
            None
        } else {
            let behaviors: Vec<Behavior> = scenario.mix.keys().copied().collect();
            let index = WeightedIndex::new(scenario.mix.values().copied())
                .map_err(|e| ProviderError::Config(format!("scenario mix: {e}")))?;
            Some((behaviors, index))
        };
        Ok(MockProvider { scenario, schema, mix, witnesses: Mutex::new(HashMap::new()) })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Witnesses in satisfying, violating, invalid order; a missing witness becomes an all-null record.
    fn cases(&self, rule: &Rule) -> [Record; 3] {
        if let Some(c) = self.witnesses.lock().unwrap().get(&rule.key()) {
            return c.clone();
        }
        let nulls: Record = rule.expression.variables().into_iter().map(|v| (v, Value::Null)).collect();
        let w = find_witnesses(rule, &self.schema).unwrap_or_default();
        let pick = |t: TriState| w.get(t).cloned().unwrap_or_else(|| nulls.clone());
        let cases = [pick(TriState::Pass), pick(TriState::Fail), pick(TriState::NotApplied)];
        self.witnesses.lock().unwrap().insert(rule.key(), cases.clone());
        cases
    }

    fn behavior(&self, key: &RuleKey, repetition: u32, rng: &mut ChaCha8Rng) -> Behavior {
        if let Some(b) = self.scenario.scripted(key, repetition) {
            return b;
        }
        match &self.mix {
            Some((behaviors, index)) => behaviors[index.sample(rng)],
            None => Behavior::Correct,
        }
    }
}

fn object(pairs: Vec<(&str, Json)>) -> Json {
    Json::Object(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
}

fn render(behavior: Behavior, cases: &[TestCase; 3], confidence: Json) -> String {
    let [s, v, i] = cases.clone().map(Json::Object);
    let keys = TestIntent::ALL.map(TestIntent::key);
    let standard = || {
        object(vec![(keys[0], s.clone()), (keys[1], v.clone()), (keys[2], i.clone()), (CONFIDENCE_KEY, confidence.clone())])
    };
    match behavior {
        Behavior::Correct | Behavior::DateDrift | Behavior::TransportFailure => standard().to_string(),
        Behavior::NearMiss => {
            object(vec![(keys[0], v.clone()), (keys[1], s.clone()), (keys[2], i.clone()), (CONFIDENCE_KEY, confidence)])
                .to_string()
        }
        Behavior::SemanticAlteration => {
            object(vec![(keys[0], s), ("violation_case", v), (keys[2], i), (CONFIDENCE_KEY, confidence)]).to_string()
        }
        Behavior::MissingTestTypes => object(vec![(keys[0], s), (keys[1], v), (CONFIDENCE_KEY, confidence)]).to_string(),
        Behavior::AdditionalTests => object(vec![
            (keys[0], s),
            (keys[1], v),
            (keys[2], i.clone()),
            ("invalid_case_1", i),
            (CONFIDENCE_KEY, confidence),
        ])
        .to_string(),
        Behavior::LackOfIntegration => format!(
            "{}\n{}\n{}",
            object(vec![(keys[0], s)]),
            object(vec![(keys[1], v)]),
            object(vec![(keys[2], i), (CONFIDENCE_KEY, confidence)])
        ),
        Behavior::UnquotedNames => {
            let mut text = standard().to_string();
            for k in keys.iter().chain([&CONFIDENCE_KEY]) {
                text = text.replacen(&format!("\"{k}\""), k, 1);
            }
            text
        }
        Behavior::MissingPairs => {
            let text = standard().to_string();
            let at = text.rfind(&format!("\"{CONFIDENCE_KEY}\":")).expect("confidence key rendered");
            format!("{}\"{CONFIDENCE_KEY}\":}}", &text[..at])
        }
        Behavior::WrongStructure => json!([s, v, i]).to_string(),
        Behavior::MissingDelimiters => standard().to_string().replacen(&format!("\"{}\":", keys[0]), &format!("\"{}\" ", keys[0]), 1),
    }
}

impl CompletionProvider for MockProvider {
    fn name(&self) -> &str {
        &self.scenario.name
    }

    fn combined(&self) -> bool {
        self.scenario.combined
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, ProviderError> {
        let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
        let behavior = self.behavior(&request.rule.key(), request.repetition, &mut rng);
        if behavior == Behavior::TransportFailure {
            return Err(ProviderError::Transport("simulated timeout".into()));
        }
        let style = if behavior == Behavior::DateDrift { DateStyle::DayFirst } else { DateStyle::Iso };
        let cases = self.cases(request.rule).map(|r| r.to_json(style));
        let confidence = if rng.random_bool(0.5) {
            json!(rng.random_range(50..=100))
        } else {
            json!(f64::from(rng.random_range(50..=100)) / 100.0)
        };
        Ok(render(behavior, &cases, confidence))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule::ValueType;
    use crate::testgen::{build_prompt, parse_response, Hallucination, JsonDefect};

    fn request<'a>(rule: &'a Rule, prompt: &'a super::super::Prompt, rep: u32) -> CompletionRequest<'a> {
        CompletionRequest { rule, prompt, temperature: 0.7, repetition: rep, seed: 99 }
    }

    #[test]
    fn each_behavior_yields_its_category() {
        let schema = Schema::new().with("A", ValueType::Integer).with("d", ValueType::Date);
        let rule = Rule::parse("V1", 1, "A = 1 implies d > date('2020-01-01')").unwrap();
        let prompt = build_prompt(&rule, false);
        let expected = [
            (Behavior::Correct, None),
            (Behavior::NearMiss, None),
            (Behavior::DateDrift, None),
            (Behavior::SemanticAlteration, Some(Hallucination::SemanticAlteration)),
            (Behavior::MissingTestTypes, Some(Hallucination::MissingTestTypes)),
            (Behavior::AdditionalTests, Some(Hallucination::AdditionalTests)),
            (Behavior::LackOfIntegration, Some(Hallucination::LackOfIntegration)),
            (Behavior::UnquotedNames, Some(Hallucination::InvalidJson(JsonDefect::UnquotedNames))),
            (Behavior::MissingPairs, Some(Hallucination::InvalidJson(JsonDefect::MissingPairs))),
            (Behavior::WrongStructure, Some(Hallucination::InvalidJson(JsonDefect::WrongStructure))),
            (Behavior::MissingDelimiters, Some(Hallucination::InvalidJson(JsonDefect::MissingDelimiters))),
        ];
        for (behavior, want) in expected {
            let scenario = Scenario { rules: [("V1".to_string(), vec![behavior])].into(), ..Scenario::default() };
            let mock = MockProvider::new(scenario, schema.clone()).unwrap();
            let text = mock.complete(&request(&rule, &prompt, 1)).unwrap();
            assert_eq!(parse_response(&text).err(), want, "{behavior:?}: {text}");
        }
        let scenario =
            Scenario { rules: [("V1/1".to_string(), vec![Behavior::TransportFailure])].into(), ..Scenario::default() };
        let mock = MockProvider::new(scenario, schema).unwrap();
        assert!(matches!(mock.complete(&request(&rule, &prompt, 1)), Err(ProviderError::Transport(_))));
    }

    #[test]
    fn replies_are_deterministic_per_seed() {
        let schema = Schema::new().with("A", ValueType::Integer);
        let rule = Rule::parse("V1", 1, "A = 1 implies A != 2").unwrap();
        let prompt = build_prompt(&rule, false);
        let scenario = Scenario {
            mix: [(Behavior::Correct, 1.0), (Behavior::WrongStructure, 1.0)].into(),
            ..Scenario::default()
        };
        let a = MockProvider::new(scenario.clone(), schema.clone()).unwrap();
        let b = MockProvider::new(scenario, schema).unwrap();
        for rep in 1..=20 {
            let mut r = request(&rule, &prompt, rep);
            r.seed = rep as u64;
            assert_eq!(a.complete(&r).unwrap(), b.complete(&r).unwrap());
        }
    }

    #[test]
    fn scenario_file_format() {
        let s: Scenario = serde_json::from_value(json!({
            "name": "m1",
            "mix": {"correct": 0.9, "nearMiss": 0.1},
            "rules": {"V03": ["wrongStructure", "correct"]}
        }))
        .unwrap();
        assert_eq!(s.scripted(&RuleKey::new("V03", 2), 3), Some(Behavior::WrongStructure));
        assert_eq!(s.scripted(&RuleKey::new("V03", 1), 2), Some(Behavior::Correct));
        assert!(MockProvider::new(Scenario { mix: [(Behavior::Correct, -1.0)].into(), ..s }, Schema::new()).is_err());
    }
}

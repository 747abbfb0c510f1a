//! Simulated production rule service with seedable inconsistencies.
//!
//! A message passes three stages: a strict date-format gate that fails the
//! whole request, a pre-aggregation gate that empties the response, and
//! per-rule evaluation with version policy, forced NotApplied and Warning
//! escalation.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rule::{categorize, DatePattern, Record, Rule, RuleKey, Schema, TriState, ValueType};

pub type Message = serde_json::Map<String, serde_json::Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ServiceResult {
    Pass,
    Fail,
    NotApplied,
    Warning,
    #[serde(rename = "500")]
    Http500,
    EmptyResponse,
}

impl ServiceResult {
    pub const ALL: [ServiceResult; 6] = [
        ServiceResult::Pass,
        ServiceResult::Fail,
        ServiceResult::NotApplied,
        ServiceResult::Warning,
        ServiceResult::Http500,
        ServiceResult::EmptyResponse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ServiceResult::Pass => "Pass",
            ServiceResult::Fail => "Fail",
            ServiceResult::NotApplied => "NotApplied",
            ServiceResult::Warning => "Warning",
            ServiceResult::Http500 => "500",
            ServiceResult::EmptyResponse => "EmptyResponse",
        }
    }

    pub fn from_tri(t: TriState) -> Self {
        match t {
            TriState::Pass => ServiceResult::Pass,
            TriState::Fail => ServiceResult::Fail,
            TriState::NotApplied => ServiceResult::NotApplied,
        }
    }
}

impl fmt::Display for ServiceResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VersionStatus {
    Active,
    Inactive,
}

/// What an inactive version reports instead of Pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Downgrade {
    #[default]
    Fail,
    NotApplied,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VersionPolicy {
    pub id: String,
    pub version: u32,
    pub status: VersionStatus,
    #[serde(default)]
    pub downgrade: Downgrade,
}

fn default_strict_date() -> Option<String> {
    Some("YYYY-MM-DD".to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FaultConfig {
    #[serde(default)]
    pub version_policy: Vec<VersionPolicy>,
    /// Accepted pattern for date fields; `null` disables the gate.
    #[serde(default = "default_strict_date")]
    pub strict_date_format: Option<String>,
    #[serde(default)]
    pub pre_aggregation_vars: BTreeSet<String>,
    #[serde(default)]
    pub warning_rules: BTreeSet<String>,
    #[serde(default)]
    pub always_not_applied_rules: BTreeSet<String>,
}

impl Default for FaultConfig {
    /// Strict ISO dates and nothing else.
    fn default() -> Self {
        FaultConfig {
            version_policy: Vec::new(),
            strict_date_format: default_strict_date(),
            pre_aggregation_vars: BTreeSet::new(),
            warning_rules: BTreeSet::new(),
            always_not_applied_rules: BTreeSet::new(),
        }
    }
}

impl FaultConfig {
    /// No gates, overrides or escalations.
    pub fn empty() -> Self {
        FaultConfig { strict_date_format: None, ..FaultConfig::default() }
    }

    pub fn policy_for(&self, key: &RuleKey) -> Option<&VersionPolicy> {
        self.version_policy.iter().find(|p| p.id == key.id && p.version == key.version)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("fault configuration names unknown rule {0}")]
    UnknownRule(String),
    #[error("fault configuration names unknown variable {0}")]
    UnknownVariable(String),
    #[error("invalid strict date format: {0}")]
    DatePattern(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RuleResult {
    pub rule_id: String,
    pub version: u32,
    pub result: ServiceResult,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServiceResponse {
    Results(Vec<RuleResult>),
    /// Whole request failed; no rule results.
    Http500,
    EmptyResponse,
}

impl ServiceResponse {
    /// The outcome reported for one rule. A rule missing from a result list reads as an empty response.
    pub fn result_for(&self, key: &RuleKey) -> ServiceResult {
        match self {
            ServiceResponse::Http500 => ServiceResult::Http500,
            ServiceResponse::EmptyResponse => ServiceResult::EmptyResponse,
            ServiceResponse::Results(rs) => rs
                .iter()
                .find(|r| r.rule_id == key.id && r.version == key.version)
                .map(|r| r.result)
                .unwrap_or(ServiceResult::EmptyResponse),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ServiceError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("service rejected the message: {0}")]
    Rejected(String),
}

/// Anything that validates full messages the way the production service does.
pub trait ValidationService: Send + Sync {
    fn validate(&self, message: &Message) -> Result<ServiceResponse, ServiceError>;
}

#[derive(Debug, Clone)]
pub struct Simulator {
    registry: Vec<Rule>,
    schema: Schema,
    faults: FaultConfig,
    strict: Option<DatePattern>,
}

impl Simulator {
    pub fn new(registry: Vec<Rule>, schema: Schema, faults: FaultConfig) -> Result<Self, ConfigError> {
        let ids: BTreeSet<&str> = registry.iter().map(|r| r.id.as_str()).collect();
        let policy_ids = faults.version_policy.iter().map(|p| &p.id);
        for id in policy_ids.chain(&faults.warning_rules).chain(&faults.always_not_applied_rules) {
            if !ids.contains(id.as_str()) {
                return Err(ConfigError::UnknownRule(id.clone()));
            }
        }
        for p in &faults.version_policy {
            if !registry.iter().any(|r| r.id == p.id && r.version == p.version) {
                return Err(ConfigError::UnknownRule(format!("{}/{}", p.id, p.version)));
            }
        }
        if let Some(var) = faults.pre_aggregation_vars.iter().find(|v| !schema.contains(v)) {
            return Err(ConfigError::UnknownVariable(var.clone()));
        }
        let strict = faults
            .strict_date_format
            .as_deref()
            .map(DatePattern::new)
            .transpose()
            .map_err(|e| ConfigError::DatePattern(e.to_string()))?;
        Ok(Simulator { registry, schema, faults, strict })
    }

    pub fn registry(&self) -> &[Rule] {
        &self.registry
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn faults(&self) -> &FaultConfig {
        &self.faults
    }

    pub fn validate_message(&self, message: &Message) -> ServiceResponse {
        if let Some(pattern) = &self.strict {
            for (name, ty) in self.schema.iter() {
                if ty != ValueType::Date {
                    continue;
                }
                match message.get(name) {
                    None | Some(serde_json::Value::Null) => {}
                    Some(serde_json::Value::String(s)) if pattern.parse(s).is_some() => {}
                    Some(_) => return ServiceResponse::Http500,
                }
            }
        }
        for var in &self.faults.pre_aggregation_vars {
            let ty = self.schema.get(var).expect("checked at construction");
            match message.get(var) {
                None | Some(serde_json::Value::Null) => return ServiceResponse::EmptyResponse,
                Some(v) if ty.coerce_json(var, v).is_err() => return ServiceResponse::EmptyResponse,
                Some(_) => {}
            }
        }
        let known: Message = message
            .iter()
            .filter(|(k, _)| self.schema.contains(k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let Ok(record) = Record::from_json(&known, &self.schema) else {
            return ServiceResponse::Http500;
        };
        ServiceResponse::Results(self.registry.iter().map(|rule| self.evaluate_rule(rule, &record)).collect())
    }

    fn evaluate_rule(&self, rule: &Rule, record: &Record) -> RuleResult {
        let result = match categorize(&rule.expression, record) {
            Err(_) => ServiceResult::Http500,
            Ok(_) if self.faults.always_not_applied_rules.contains(&rule.id) => ServiceResult::NotApplied,
            Ok(t) => {
                let (active, downgrade) = match self.faults.policy_for(&rule.key()) {
                    Some(p) => (p.status == VersionStatus::Active, p.downgrade),
                    None => (rule.active, Downgrade::Fail),
                };
                let t = match (active, t, downgrade) {
                    (false, TriState::Pass, Downgrade::Fail) => TriState::Fail,
                    (false, TriState::Pass, Downgrade::NotApplied) => TriState::NotApplied,
                    (_, t, _) => t,
                };
                if t == TriState::Fail && self.faults.warning_rules.contains(&rule.id) {
                    ServiceResult::Warning
                } else {
                    ServiceResult::from_tri(t)
                }
            }
        };
        RuleResult { rule_id: rule.id.clone(), version: rule.version, result }
    }
}

impl ValidationService for Simulator {
    fn validate(&self, message: &Message) -> Result<ServiceResponse, ServiceError> {
        Ok(self.validate_message(message))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn schema() -> Schema {
        Schema::new()
            .with("A", ValueType::Integer)
            .with("B", ValueType::Integer)
            .with("ds", ValueType::Integer)
            .with("d", ValueType::Date)
    }

    fn rules() -> Vec<Rule> {
        vec![
            Rule::parse("V19", 1, "A = 1 implies B = 2").unwrap(),
            Rule::parse("V19", 2, "A = 1 implies B = 2").unwrap(),
            Rule::parse("V69", 1, "A = 1 implies d > date('2020-01-01')").unwrap(),
        ]
    }

    fn msg(v: serde_json::Value) -> Message {
        v.as_object().unwrap().clone()
    }

    fn base() -> Message {
        msg(json!({"A": 1, "B": 2, "ds": 3, "d": "2021-02-01"}))
    }

    #[test]
    fn default_config_rejects_day_first_dates() {
        let sim = Simulator::new(rules(), schema(), FaultConfig::default()).unwrap();
        let mut m = base();
        m.insert("d".into(), json!("01-02-2021"));
        assert_eq!(sim.validate_message(&m), ServiceResponse::Http500);
        assert!(matches!(sim.validate_message(&base()), ServiceResponse::Results(_)));
    }

    #[test]
    fn empty_config_accepts_lenient_dates() {
        let sim = Simulator::new(rules(), schema(), FaultConfig::empty()).unwrap();
        let mut m = base();
        m.insert("d".into(), json!("01-02-2021"));
        let resp = sim.validate_message(&m);
        assert_eq!(resp.result_for(&RuleKey::new("V69", 1)), ServiceResult::Pass);
    }

    #[test]
    fn pre_aggregation_null_empties_the_response() {
        let faults = FaultConfig { pre_aggregation_vars: ["ds".to_string()].into(), ..FaultConfig::empty() };
        let sim = Simulator::new(rules(), schema(), faults).unwrap();
        let mut m = base();
        m.insert("ds".into(), serde_json::Value::Null);
        assert_eq!(sim.validate_message(&m), ServiceResponse::EmptyResponse);
        m.insert("ds".into(), json!("many"));
        assert_eq!(sim.validate_message(&m), ServiceResponse::EmptyResponse);
        m.remove("ds");
        assert_eq!(sim.validate_message(&m), ServiceResponse::EmptyResponse);
    }

    #[test]
    fn inactive_versions_never_pass() {
        let faults = FaultConfig {
            version_policy: vec![
                VersionPolicy { id: "V19".into(), version: 1, status: VersionStatus::Inactive, downgrade: Downgrade::Fail },
                VersionPolicy {
                    id: "V69".into(),
                    version: 1,
                    status: VersionStatus::Inactive,
                    downgrade: Downgrade::NotApplied,
                },
            ],
            ..FaultConfig::empty()
        };
        let sim = Simulator::new(rules(), schema(), faults).unwrap();
        let resp = sim.validate_message(&base());
        assert_eq!(resp.result_for(&RuleKey::new("V19", 1)), ServiceResult::Fail);
        assert_eq!(resp.result_for(&RuleKey::new("V19", 2)), ServiceResult::Pass);
        assert_eq!(resp.result_for(&RuleKey::new("V69", 1)), ServiceResult::NotApplied);
    }

    #[test]
    fn registry_active_flag_is_the_default_policy() {
        let mut rs = rules();
        rs[0].active = false;
        let sim = Simulator::new(rs, schema(), FaultConfig::empty()).unwrap();
        assert_eq!(sim.validate_message(&base()).result_for(&RuleKey::new("V19", 1)), ServiceResult::Fail);
    }

    #[test]
    fn warning_and_forced_not_applied() {
        let faults = FaultConfig {
            warning_rules: ["V19".to_string()].into(),
            always_not_applied_rules: ["V69".to_string()].into(),
            ..FaultConfig::empty()
        };
        let sim = Simulator::new(rules(), schema(), faults).unwrap();
        let mut m = base();
        m.insert("B".into(), json!(3));
        let resp = sim.validate_message(&m);
        assert_eq!(resp.result_for(&RuleKey::new("V19", 1)), ServiceResult::Warning);
        assert_eq!(resp.result_for(&RuleKey::new("V69", 1)), ServiceResult::NotApplied);
    }

    #[test]
    fn evaluation_errors_are_isolated_per_rule() {
        let s = Schema::new().with("t", ValueType::Text).with("A", ValueType::Integer);
        let rs = vec![Rule::parse("S", 1, "substring(t, 3, 4) = 'x'").unwrap(), Rule::parse("T", 1, "A = 1").unwrap()];
        let sim = Simulator::new(rs, s, FaultConfig::empty()).unwrap();
        let resp = sim.validate_message(&msg(json!({"t": "ab", "A": 1})));
        assert_eq!(resp.result_for(&RuleKey::new("S", 1)), ServiceResult::Http500);
        assert_eq!(resp.result_for(&RuleKey::new("T", 1)), ServiceResult::Pass);
    }

    #[test]
    fn config_file_format() {
        let cfg: FaultConfig = serde_json::from_value(json!({
            "versionPolicy": [{"id": "V19", "version": 1, "status": "inactive", "downgrade": "not_applied"}],
            "preAggregationVars": ["ds"],
            "warningRules": ["V69"]
        }))
        .unwrap();
        assert_eq!(cfg.strict_date_format.as_deref(), Some("YYYY-MM-DD"));
        assert_eq!(cfg.version_policy[0].downgrade, Downgrade::NotApplied);
        let off: FaultConfig = serde_json::from_value(json!({"strictDateFormat": null})).unwrap();
        assert_eq!(off, FaultConfig::empty());
        assert!(serde_json::from_value::<FaultConfig>(json!({"bogus": 1})).is_err());
    }

    #[test]
    fn config_must_reference_known_names() {
        let bad = FaultConfig { warning_rules: ["V99".to_string()].into(), ..FaultConfig::empty() };
        assert_eq!(Simulator::new(rules(), schema(), bad).unwrap_err(), ConfigError::UnknownRule("V99".into()));
        let bad = FaultConfig { pre_aggregation_vars: ["zz".to_string()].into(), ..FaultConfig::empty() };
        assert!(matches!(Simulator::new(rules(), schema(), bad), Err(ConfigError::UnknownVariable(_))));
    }

    #[test]
    fn result_serialisation() {
        let r = RuleResult { rule_id: "V1".into(), version: 2, result: ServiceResult::Http500 };
        assert_eq!(serde_json::to_value(&r).unwrap(), json!({"ruleId": "V1", "version": 2, "result": "500"}));
    }
}

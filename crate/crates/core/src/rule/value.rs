//! Runtime values, declared types and date handling.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Declared type of a schema variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Text,
    Integer,
    Decimal,
    Date,
}

impl ValueType {
    pub fn is_numeric(self) -> bool {
        matches!(self, ValueType::Integer | ValueType::Decimal)
    }

    /// Whether values of the two types can be compared with each other.
    pub fn comparable_with(self, other: ValueType) -> bool {
        self == other || (self.is_numeric() && other.is_numeric())
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ValueType::Text => "text",
            ValueType::Integer => "integer",
            ValueType::Decimal => "decimal",
            ValueType::Date => "date",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Text(String),
    Integer(i64),
    Decimal(f64),
    Date(NaiveDate),
    Null,
}

impl Value {
    pub fn value_type(&self) -> Option<ValueType> {
        match self {
            Value::Text(_) => Some(ValueType::Text),
            Value::Integer(_) => Some(ValueType::Integer),
            Value::Decimal(_) => Some(ValueType::Decimal),
            Value::Date(_) => Some(ValueType::Date),
            Value::Null => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    /// Orders two non-null values of comparable types. `None` when the types
    /// cannot be compared or either side is null.
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Text(a), Value::Text(b)) => Some(a.cmp(b)),
            (Value::Integer(a), Value::Integer(b)) => Some(a.cmp(b)),
            (Value::Integer(a), Value::Decimal(b)) => (*a as f64).partial_cmp(b),
            (Value::Decimal(a), Value::Integer(b)) => a.partial_cmp(&(*b as f64)),
            (Value::Decimal(a), Value::Decimal(b)) => a.partial_cmp(b),
            (Value::Date(a), Value::Date(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }

    /// JSON rendering used for test cases and messages.
    pub fn to_json(&self, style: DateStyle) -> serde_json::Value {
        match self {
            Value::Text(s) => serde_json::Value::String(s.clone()),
            Value::Integer(i) => serde_json::Value::from(*i),
            Value::Decimal(d) => serde_json::Number::from_f64(*d)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Value::Date(d) => serde_json::Value::String(style.format(*d)),
            Value::Null => serde_json::Value::Null,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(s) => write!(f, "{s:?}"),
            Value::Integer(i) => write!(f, "{i}"),
            Value::Decimal(d) => write!(f, "{d:?}"),
            Value::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            Value::Null => f.write_str("null"),
        }
    }
}

/// How dates are written when a record is rendered to JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DateStyle {
    /// `YYYY-MM-DD`
    #[default]
    Iso,
    /// `DD-MM-YYYY`
    DayFirst,
}

impl DateStyle {
    pub fn format(self, date: NaiveDate) -> String {
        match self {
            DateStyle::Iso => format!("{:04}-{:02}-{:02}", date.year(), date.month(), date.day()),
            DateStyle::DayFirst => format!("{:02}-{:02}-{:04}", date.day(), date.month(), date.year()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PatternToken {
    Year,
    Month,
    Day,
    Literal(char),
}

/// A fixed-width date pattern such as `YYYY-MM-DD` or `DD.MM.YYYY`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatePattern {
    source: String,
    tokens: Vec<PatternToken>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("invalid date pattern {pattern:?}: {reason}")]
pub struct DatePatternError {
    pub pattern: String,
    pub reason: &'static str,
}

impl DatePattern {
    pub fn new(pattern: &str) -> Result<Self, DatePatternError> {
        let err = |reason| DatePatternError { pattern: pattern.to_string(), reason };
        let mut tokens = Vec::new();
        let mut rest = pattern;
        while !rest.is_empty() {
            if let Some(r) = rest.strip_prefix("YYYY") {
                tokens.push(PatternToken::Year);
                rest = r;
            } else if let Some(r) = rest.strip_prefix("MM") {
                tokens.push(PatternToken::Month);
                rest = r;
            } else if let Some(r) = rest.strip_prefix("DD") {
                tokens.push(PatternToken::Day);
                rest = r;
            } else {
                let c = rest.chars().next().unwrap();
                if c.is_ascii_alphanumeric() {
                    return Err(err("only YYYY, MM, DD and separators are supported"));
                }
                tokens.push(PatternToken::Literal(c));
                rest = &rest[c.len_utf8()..];
            }
        }
        for needed in [PatternToken::Year, PatternToken::Month, PatternToken::Day] {
            if tokens.iter().filter(|t| **t == needed).count() != 1 {
                return Err(err("pattern needs exactly one YYYY, MM and DD"));
            }
        }
        Ok(DatePattern { source: pattern.to_string(), tokens })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    /// Parses `text` if it matches the pattern exactly and names a real calendar date.
    pub fn parse(&self, text: &str) -> Option<NaiveDate> {
        let bytes = text.as_bytes();
        let mut pos = 0;
        let (mut year, mut month, mut day) = (0i32, 0u32, 0u32);
        for token in &self.tokens {
            match token {
                PatternToken::Literal(c) => {
                    let mut buf = [0u8; 4];
                    let lit = c.encode_utf8(&mut buf).as_bytes();
                    if bytes.get(pos..pos + lit.len())? != lit {
                        return None;
                    }
                    pos += lit.len();
                }
                PatternToken::Year => {
                    year = digits(bytes.get(pos..pos + 4)?)? as i32;
                    pos += 4;
                }
                PatternToken::Month => {
                    month = digits(bytes.get(pos..pos + 2)?)?;
                    pos += 2;
                }
                PatternToken::Day => {
                    day = digits(bytes.get(pos..pos + 2)?)?;
                    pos += 2;
                }
            }
        }
        if pos != bytes.len() {
            return None;
        }
        NaiveDate::from_ymd_opt(year, month, day)
    }
}

impl fmt::Display for DatePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

fn digits(bytes: &[u8]) -> Option<u32> {
    bytes.iter().try_fold(0u32, |acc, b| {
        b.is_ascii_digit().then(|| acc * 10 + u32::from(b - b'0'))
    })
}

/// Formats accepted when a date arrives as text and no strict pattern is in force.
pub const LENIENT_DATE_PATTERNS: [&str; 4] = ["YYYY-MM-DD", "DD-MM-YYYY", "DD.MM.YYYY", "DD/MM/YYYY"];

pub fn parse_date_lenient(text: &str) -> Option<NaiveDate> {
    LENIENT_DATE_PATTERNS
        .iter()
        .filter_map(|p| DatePattern::new(p).ok())
        .find_map(|p| p.parse(text.trim()))
}

pub fn parse_iso_date(text: &str) -> Option<NaiveDate> {
    DatePattern::new("YYYY-MM-DD").ok()?.parse(text)
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CoerceError {
    #[error("variable {0:?} is not declared in the schema")]
    UnknownVariable(String),
    #[error("value {value} for {variable:?} cannot be read as {expected}")]
    Incompatible {
        variable: String,
        expected: ValueType,
        value: String,
    },
}

impl ValueType {
    /// Schema-directed conversion of a JSON scalar. Dates accept any of the
    /// lenient patterns.
    pub fn coerce_json(self, variable: &str, json: &serde_json::Value) -> Result<Value, CoerceError> {
        use serde_json::Value as J;
        let fail = || CoerceError::Incompatible {
            variable: variable.to_string(),
            expected: self,
            value: json.to_string(),
        };
        if json.is_null() {
            return Ok(Value::Null);
        }
        match self {
            ValueType::Text => match json {
                J::String(s) => Ok(Value::Text(s.clone())),
                J::Number(n) => Ok(Value::Text(n.to_string())),
                _ => Err(fail()),
            },
            ValueType::Integer => match json {
                J::Number(n) => n
                    .as_i64()
                    .or_else(|| n.as_f64().filter(|f| f.fract() == 0.0 && f.abs() < 9.0e15).map(|f| f as i64))
                    .map(Value::Integer)
                    .ok_or_else(fail),
                J::String(s) => s.trim().parse::<i64>().map(Value::Integer).map_err(|_| fail()),
                _ => Err(fail()),
            },
            ValueType::Decimal => match json {
                J::Number(n) => n.as_f64().map(Value::Decimal).ok_or_else(fail),
                J::String(s) => s
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|f| f.is_finite())
                    .map(Value::Decimal)
                    .ok_or_else(fail),
                _ => Err(fail()),
            },
            ValueType::Date => match json {
                J::String(s) => parse_date_lenient(s).map(Value::Date).ok_or_else(fail),
                _ => Err(fail()),
            },
        }
    }
}

/// Variable name to declared type.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema(BTreeMap<String, ValueType>);

impl Schema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, ty: ValueType) -> Self {
        self.insert(name, ty);
        self
    }

    pub fn insert(&mut self, name: &str, ty: ValueType) {
        self.0.insert(name.to_string(), ty);
    }

    pub fn get(&self, name: &str) -> Option<ValueType> {
        self.0.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, ValueType)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A flat assignment of values to variables. Absent variables read as null.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Record(BTreeMap<String, Value>);

impl Record {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: Value) -> Self {
        self.set(name, value);
        self
    }

    pub fn set(&mut self, name: &str, value: Value) {
        assert!(!name.is_empty(), "record variable names must be non-empty");
        self.0.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> &Value {
        self.0.get(name).unwrap_or(&Value::Null)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Reads a JSON object through the schema.
    pub fn from_json(
        object: &serde_json::Map<String, serde_json::Value>,
        schema: &Schema,
    ) -> Result<Record, CoerceError> {
        let mut record = Record::new();
        for (name, json) in object {
            let ty = schema
                .get(name)
                .ok_or_else(|| CoerceError::UnknownVariable(name.clone()))?;
            record.set(name, ty.coerce_json(name, json)?);
        }
        Ok(record)
    }

    pub fn to_json(&self, style: DateStyle) -> serde_json::Map<String, serde_json::Value> {
        self.0.iter().map(|(k, v)| (k.clone(), v.to_json(style))).collect()
    }
}

impl FromIterator<(String, Value)> for Record {
    fn from_iter<I: IntoIterator<Item = (String, Value)>>(iter: I) -> Self {
        Record(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn pattern_requires_exact_width() {
        let iso = DatePattern::new("YYYY-MM-DD").unwrap();
        assert_eq!(iso.parse("2021-02-01"), NaiveDate::from_ymd_opt(2021, 2, 1));
        assert_eq!(iso.parse("2021-2-01"), None);
        assert_eq!(iso.parse("01-02-2021"), None);
        assert_eq!(iso.parse("2021-02-30"), None);
        assert_eq!(iso.parse("2021-02-01T00"), None);
    }

    #[test]
    fn lenient_parsing_accepts_day_first() {
        assert_eq!(parse_date_lenient("01-02-2021"), NaiveDate::from_ymd_opt(2021, 2, 1));
        assert_eq!(parse_date_lenient("01.02.2021"), NaiveDate::from_ymd_opt(2021, 2, 1));
        assert_eq!(parse_date_lenient("yesterday"), None);
    }

    #[test]
    fn bad_patterns_are_rejected() {
        assert!(DatePattern::new("YYYY-MM").is_err());
        assert!(DatePattern::new("YYYY-MM-DDx").is_err());
        assert!(DatePattern::new("DD.MM.YYYY").is_ok());
    }

    #[test]
    fn date_styles_render() {
        let d = NaiveDate::from_ymd_opt(2021, 2, 1).unwrap();
        assert_eq!(DateStyle::Iso.format(d), "2021-02-01");
        assert_eq!(DateStyle::DayFirst.format(d), "01-02-2021");
    }

    #[test]
    fn coercion_follows_schema() {
        let schema = Schema::new()
            .with("a", ValueType::Integer)
            .with("d", ValueType::Date)
            .with("t", ValueType::Text);
        let obj = json!({"a": 3, "d": "2020-01-31", "t": null});
        let rec = Record::from_json(obj.as_object().unwrap(), &schema).unwrap();
        assert_eq!(rec.get("a"), &Value::Integer(3));
        assert_eq!(rec.get("d"), &Value::Date(NaiveDate::from_ymd_opt(2020, 1, 31).unwrap()));
        assert_eq!(rec.get("t"), &Value::Null);
        assert_eq!(rec.get("missing"), &Value::Null);

        let bad = json!({"a": 1.5});
        assert!(matches!(
            Record::from_json(bad.as_object().unwrap(), &schema),
            Err(CoerceError::Incompatible { .. })
        ));
        let unknown = json!({"zz": 1});
        assert_eq!(
            Record::from_json(unknown.as_object().unwrap(), &schema),
            Err(CoerceError::UnknownVariable("zz".into()))
        );
    }

    #[test]
    fn numeric_values_compare_across_kinds() {
        assert_eq!(Value::Integer(2).compare(&Value::Decimal(2.0)), Some(Ordering::Equal));
        assert_eq!(Value::Integer(2).compare(&Value::Text("2".into())), None);
        assert_eq!(Value::Null.compare(&Value::Null), None);
    }
}

//! Prompting a completion provider for rule tests and recording what comes back.

mod mock;
mod prompt;
mod response;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec::Execution;
use crate::rule::{Rule, RuleKey};

pub use mock::{Behavior, MockProvider, Scenario};
pub use prompt::{build_prompt, Prompt};
pub use response::{
    exact_match, normalize_confidence, parse_response, GeneratedTestSet, Hallucination, JsonDefect, TestCase,
    TestIntent, CONFIDENCE_KEY,
};

pub const DEFAULT_REPS: u32 = 30;
pub const DEFAULT_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    /// Worth retrying: timeouts, connection failures, server errors.
    #[error("transport error: {0}")]
    Transport(String),
    /// Not worth retrying: bad credentials or configuration. Aborts generation.
    #[error("provider configuration error: {0}")]
    Config(String),
}

pub struct CompletionRequest<'a> {
    pub rule: &'a Rule,
    pub prompt: &'a Prompt,
    pub temperature: f64,
    pub repetition: u32,
    /// Per-request seed derived from the run seed; providers may ignore it.
    pub seed: u64,
}

pub trait CompletionProvider: Send + Sync {
    fn name(&self) -> &str;

    /// Whether system and user parts must be sent as one text.
    fn combined(&self) -> bool {
        false
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "camelCase")]
pub enum ParseOutcome {
    Parsed { tests: GeneratedTestSet },
    Hallucination { hallucination: Hallucination },
    TransportFailure { error: String },
}

impl ParseOutcome {
    pub fn from_reply(text: &str) -> Self {
        match parse_response(text) {
            Ok(tests) => ParseOutcome::Parsed { tests },
            Err(hallucination) => ParseOutcome::Hallucination { hallucination },
        }
    }

    pub fn tests(&self) -> Option<&GeneratedTestSet> {
        match self {
            ParseOutcome::Parsed { tests } => Some(tests),
            _ => None,
        }
    }

    pub fn is_exact_match(&self) -> bool {
        self.tests().is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub provider: String,
    pub rule_id: String,
    pub version: u32,
    pub repetition: u32,
    pub raw: Option<String>,
    pub outcome: ParseOutcome,
    pub latency_s: f64,
}

impl GenerationRecord {
    pub fn key(&self) -> RuleKey {
        RuleKey::new(&self.rule_id, self.version)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { retries: 3, base_delay: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    pub fn immediate(retries: u32) -> Self {
        RetryPolicy { retries, base_delay: Duration::ZERO }
    }

    /// Runs `attempt` until it succeeds, fails permanently or the retries run out.
    /// `retryable` decides which errors are worth another attempt.
    pub fn run<T, E>(&self, mut attempt: impl FnMut() -> Result<T, E>, retryable: impl Fn(&E) -> bool) -> Result<T, E> {
        let mut delay = self.base_delay;
        let mut tries = 0;
        loop {
            match attempt() {
                Err(e) if retryable(&e) && tries < self.retries => {
                    tries += 1;
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                    delay *= 2;
                }
                other => return other,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOptions {
    pub reps: u32,
    pub temperature: f64,
    pub seed: u64,
    pub retry: RetryPolicy,
    pub exec: Execution,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            reps: DEFAULT_REPS,
            temperature: DEFAULT_TEMPERATURE,
            seed: 0,
            retry: RetryPolicy::default(),
            exec: Execution::default(),
        }
    }
}

/// Stable per-request seed from the run seed and the request identity.
pub fn derive_seed(seed: u64, key: &RuleKey, repetition: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(key.id.as_bytes());
    h.update([0]);
    h.update(key.version.to_le_bytes());
    h.update(repetition.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has at least 8 bytes"))
}

fn one(
    rule: &Rule,
    provider: &dyn CompletionProvider,
    prompt: &Prompt,
    repetition: u32,
    opts: &GenerateOptions,
) -> Result<GenerationRecord, ProviderError> {
    let request = CompletionRequest {
        rule,
        prompt,
        temperature: opts.temperature,
        repetition,
        seed: derive_seed(opts.seed, &rule.key(), repetition),
    };
    let mut started = Instant::now();
    let reply = opts.retry.run(
        || {
            started = Instant::now();
            provider.complete(&request)
        },
        |e| matches!(e, ProviderError::Transport(_)),
    );
    let latency_s = started.elapsed().as_secs_f64();
    let (raw, outcome) = match reply {
        Ok(text) => {
            let outcome = ParseOutcome::from_reply(&text);
            (Some(text), outcome)
        }
        Err(ProviderError::Transport(error)) => {
            log::warn!("{} repetition {repetition}: giving up after retries: {error}", rule.key());
            (None, ParseOutcome::TransportFailure { error })
        }
        Err(e) => return Err(e),
    };
    Ok(GenerationRecord {
        provider: provider.name().to_string(),
        rule_id: rule.id.clone(),
        version: rule.version,
        repetition,
        raw,
        outcome,
        latency_s,
    })
}

/// Exactly `opts.reps` records for one rule, in repetition order.
pub fn generate(
    rule: &Rule,
    provider: &dyn CompletionProvider,
    opts: &GenerateOptions,
) -> Result<Vec<GenerationRecord>, ProviderError> {
    generate_all(std::slice::from_ref(rule), provider, opts)
}

/// Records for every rule and repetition, ordered by rule then repetition whatever the completion order.
pub fn generate_all(
    rules: &[Rule],
    provider: &dyn CompletionProvider,
    opts: &GenerateOptions,
) -> Result<Vec<GenerationRecord>, ProviderError> {
    if opts.reps == 0 {
        return Err(ProviderError::Config("repetitions must be at least 1".into()));
    }
    let prompts: Vec<Prompt> = rules.iter().map(|r| build_prompt(r, provider.combined())).collect();
    let jobs: Vec<(usize, u32)> = (0..rules.len()).flat_map(|i| (1..=opts.reps).map(move |rep| (i, rep))).collect();
    opts.exec
        .map(&jobs, |&(i, rep)| one(&rules[i], provider, &prompts[i], rep, opts))
        .into_iter()
        .collect()
}

/// JSON-lines text, one record per line.
pub fn records_to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialise"));
        out.push('\n');
    }
    out
}

pub fn records_from_jsonl<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        failures_before_success: u32,
        calls: AtomicU32,
        fail_rep: Option<u32>,
    }

    impl CompletionProvider for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }

        fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, ProviderError> {
            if Some(req.repetition) == self.fail_rep {
                return Err(ProviderError::Transport("timeout".into()));
            }
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures_before_success {
                return Err(ProviderError::Transport("reset".into()));
            }
            Ok(r#"{"satisfying_case": {}, "violating_case": {}, "invalid_case": {}, "confidence_score": 1}"#.into())
        }
    }

    struct Unauthorised;

    impl CompletionProvider for Unauthorised {
        fn name(&self) -> &str {
            "denied"
        }

        fn complete(&self, _: &CompletionRequest<'_>) -> Result<String, ProviderError> {
            Err(ProviderError::Config("401".into()))
        }
    }

    fn opts(reps: u32) -> GenerateOptions {
        GenerateOptions { reps, retry: RetryPolicy::immediate(3), exec: Execution::Sequential, ..Default::default() }
    }

    #[test]
    fn transport_failure_keeps_rep_count() {
        let rule = Rule::parse("V1", 1, "A = 1").unwrap();
        let p = Flaky { failures_before_success: 0, calls: AtomicU32::new(0), fail_rep: Some(2) };
        let recs = generate(&rule, &p, &opts(3)).unwrap();
        assert_eq!(recs.iter().map(|r| r.repetition).collect::<Vec<_>>(), [1, 2, 3]);
        assert!(matches!(recs[1].outcome, ParseOutcome::TransportFailure { .. }));
        assert!(recs[0].outcome.is_exact_match() && recs[2].outcome.is_exact_match());
        assert!(recs.iter().all(|r| r.latency_s >= 0.0));
    }

    #[test]
    fn transient_errors_are_retried() {
        let rule = Rule::parse("V1", 1, "A = 1").unwrap();
        let p = Flaky { failures_before_success: 3, calls: AtomicU32::new(0), fail_rep: None };
        let recs = generate(&rule, &p, &opts(1)).unwrap();
        assert!(recs[0].outcome.is_exact_match());
        let p = Flaky { failures_before_success: 4, calls: AtomicU32::new(0), fail_rep: None };
        let recs = generate(&rule, &p, &opts(1)).unwrap();
        assert!(matches!(recs[0].outcome, ParseOutcome::TransportFailure { .. }));
    }

    #[test]
    fn config_errors_abort() {
        let rule = Rule::parse("V1", 1, "A = 1").unwrap();
        assert_eq!(generate(&rule, &Unauthorised, &opts(2)), Err(ProviderError::Config("401".into())));
        assert!(generate(&rule, &Unauthorised, &opts(0)).is_err());
    }

    #[test]
    fn defaults() {
        let o = GenerateOptions::default();
        assert_eq!((o.reps, o.temperature), (30, 0.7));
        assert_eq!(RetryPolicy::default().retries, 3);
    }

    #[test]
    fn seeds_depend_on_every_input() {
        let k = RuleKey::new("V1", 1);
        let s = derive_seed(1, &k, 1);
        assert_eq!(s, derive_seed(1, &k, 1));
        assert_ne!(s, derive_seed(2, &k, 1));
        assert_ne!(s, derive_seed(1, &k, 2));
        assert_ne!(s, derive_seed(1, &RuleKey::new("V1", 2), 1));
    }

    #[test]
    fn jsonl_roundtrip() {
        let rec = GenerationRecord {
            provider: "p".into(),
            rule_id: "V1".into(),
            version: 1,
            repetition: 1,
            raw: Some("x".into()),
            outcome: ParseOutcome::from_reply("x"),
            latency_s: 0.5,
        };
        let text = records_to_jsonl(&[rec.clone(), rec.clone()]);
        assert_eq!(text.lines().count(), 2);
        assert_eq!(records_from_jsonl::<GenerationRecord>(&text).unwrap(), vec![rec.clone(), rec]);
    }
}

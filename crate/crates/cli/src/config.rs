//! Run configuration file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use serde::{Deserialize, Serialize};

use rulediff_core::stats::{metric_names, DEFAULT_ALPHA};
use rulediff_core::testgen::{DEFAULT_REPS, DEFAULT_TEMPERATURE};
use rulediff_core::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub count: usize,
    pub quota: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { count: 10, quota: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProviderConfig {
    /// Offline provider; without a scenario every reply is correct.
    Mock {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scenario: Option<PathBuf>,
    },
    /// Chat-completion endpoint configured through `PROVIDER_*` environment variables.
    Http {
        #[serde(default)]
        combined: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct RunConfig {
    /// Rules, schema and template files; all three or none. Without them a corpus is synthesised.
    pub rules: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub template: Option<PathBuf>,
    pub corpus: CorpusConfig,
    /// Parent directory of run directories; `runs` when unset.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    pub providers: Vec<ProviderConfig>,
    pub reps: u32,
    pub temperature: f64,
    pub alpha: f64,
    pub seed: u64,
    pub service_url: Option<String>,
    pub serve_embedded: bool,
    /// Fault configuration of the embedded service.
    pub faults: Option<PathBuf>,
    pub parallel: bool,
    pub threads: Option<usize>,
    pub retries: u32,
    pub metrics: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            rules: None,
            schema: None,
            template: None,
            corpus: CorpusConfig::default(),
            out: None,
            providers: vec![ProviderConfig::Mock { name: None, scenario: None }],
            reps: DEFAULT_REPS,
            temperature: DEFAULT_TEMPERATURE,
            alpha: DEFAULT_ALPHA,
            seed: 0,
            service_url: None,
            serve_embedded: false,
            faults: None,
            parallel: true,
            threads: None,
            retries: 3,
            metrics: metric_names(),
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    /// Reads a config file; relative paths inside it are taken relative to the file.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.rules, &mut cfg.schema, &mut cfg.template, &mut cfg.faults, &mut cfg.out] {
            resolve(base, p);
        }
        for provider in &mut cfg.providers {
            if let ProviderConfig::Mock { scenario, .. } = provider {
                resolve(base, scenario);
            }
        }
        Ok(cfg)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("runs"))
    }

    pub fn exec(&self) -> Execution {
        if self.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    /// Display name of each provider, in configuration order.
    pub fn provider_names(&self) -> Vec<String> {
        self.providers
            .iter()
            .map(|p| match p {
                ProviderConfig::Mock { name: Some(n), .. } => n.clone(),
                ProviderConfig::Mock { scenario: Some(s), .. } => {
                    s.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "mock".into())
                }
                ProviderConfig::Mock { .. } => "mock".into(),
                ProviderConfig::Http { .. } => {
                    std::env::var(rulediff_service::ENV_MODEL).unwrap_or_else(|_| "http".into())
                }
            })
            .collect()
    }

    /// Checks everything that can be checked before a stage runs.
    pub fn validate(&self) -> anyhow::Result<()> {
        for p in [&self.rules, &self.schema, &self.template, &self.faults].into_iter().flatten() {
            ensure!(p.is_file(), "{} does not exist", p.display());
        }
        let given = [&self.rules, &self.schema, &self.template].iter().filter(|p| p.is_some()).count();
        ensure!(given == 0 || given == 3, "rules, schema and template must be given together");
        ensure!(self.reps >= 1, "reps must be at least 1");
        ensure!(self.alpha > 0.0 && self.alpha < 1.0, "alpha must lie strictly between 0 and 1");
        ensure!(self.temperature >= 0.0, "temperature must not be negative");
        ensure!(!self.providers.is_empty(), "at least one provider is required");
        ensure!(self.threads != Some(0), "threads must be at least 1");
        for p in &self.providers {
            if let ProviderConfig::Mock { scenario: Some(s), .. } = p {
                ensure!(s.is_file(), "scenario {} does not exist", s.display());
            }
        }
        let names = self.provider_names();
        let unique: BTreeSet<&String> = names.iter().collect();
        ensure!(unique.len() == names.len(), "provider names must be unique: {names:?}");
        let known = metric_names();
        for m in &self.metrics {
            if !known.contains(m) {
                bail!("unknown metric {m:?}; known metrics are {known:?}");
            }
        }
        Ok(())
    }
}

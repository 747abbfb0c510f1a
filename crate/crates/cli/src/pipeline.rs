//! The staged pipeline and the stage bodies shared with the single-stage subcommands.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use rulediff_core::corpus::{generate_corpus, Corpus, CorpusSpec};
use rulediff_core::difftest::{ledger, ledger_csv, run_generations, DiffContext, DiffLedger, DiffRun, SkippedTest};
use rulediff_core::metrics::{compute, metrics_csv, metrics_from_csv, MetricRow};
use rulediff_core::mutation::{mutate_all, MutantInfo};
use rulediff_core::rule::{check_rules, rules_from_json, rules_to_json, schema_from_json, schema_to_json, Rule, Schema};
use rulediff_core::sim::{FaultConfig, Simulator, ValidationService};
use rulediff_core::stats::{compare_metrics, stats_csv, Comparison};
use rulediff_core::testgen::{
    generate_all, records_from_jsonl, records_to_jsonl, CompletionProvider, GenerateOptions, GenerationRecord,
    MockProvider, RetryPolicy, Scenario, TestCase,
};
use rulediff_core::Execution;
use rulediff_service::{ChatProvider, EmbeddedServer, ServiceClient};

use crate::artifacts::{self as art, new_run_dir, sha256_hex, ArtifactEntry, Manifest};
use crate::config::{ProviderConfig, RunConfig};
use crate::error::{CliError, CliResult};
use crate::report::{build_report, render_text};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Corpus,
    Mutate,
    Generate,
    Diff,
    Metrics,
    Stats,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Corpus, Stage::Mutate, Stage::Generate, Stage::Diff, Stage::Metrics, Stage::Stats, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Corpus => "corpus",
            Stage::Mutate => "mutate",
            Stage::Generate => "generate",
            Stage::Diff => "diff",
            Stage::Metrics => "metrics",
            Stage::Stats => "stats",
            Stage::Report => "report",
        }
    }

    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Corpus => &[art::RULES, art::SCHEMA, art::TEMPLATE],
            Stage::Mutate => &[art::MUTANTS, art::MUTANT_MAP],
            Stage::Generate => &[art::GENERATIONS],
            Stage::Diff => &[art::DIFF, art::LEDGER_JSON, art::LEDGER_CSV],
            Stage::Metrics => &[art::METRICS],
            Stage::Stats => &[art::STATS_CSV, art::STATS_JSON, art::TIMING],
            Stage::Report => &[art::REPORT_JSON, art::REPORT_TXT],
        }
    }

    pub fn inputs(self) -> &'static [&'static str] {
        match self {
            Stage::Corpus => &[],
            Stage::Mutate => &[art::RULES],
            Stage::Generate => &[art::RULES, art::SCHEMA, art::MUTANTS],
            Stage::Diff => &[art::RULES, art::SCHEMA, art::TEMPLATE, art::GENERATIONS],
            Stage::Metrics => &[art::RULES, art::SCHEMA, art::MUTANTS, art::MUTANT_MAP, art::GENERATIONS],
            Stage::Stats => &[art::METRICS, art::GENERATIONS],
            Stage::Report => {
                &[art::RULES, art::MUTANT_MAP, art::GENERATIONS, art::LEDGER_JSON, art::METRICS, art::STATS_JSON]
            }
        }
    }

    /// `stages` plus every stage that consumes, directly or not, something they produce.
    pub fn downstream(stages: &[Stage]) -> Vec<Stage> {
        let mut out: Vec<Stage> = stages.to_vec();
        for s in Stage::ALL {
            if !out.contains(&s) && s.inputs().iter().any(|i| Stage::producer(i).is_some_and(|p| out.contains(&p))) {
                out.push(s);
            }
        }
        out.sort();
        out
    }

    fn producer(artifact: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.outputs().contains(&artifact))
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| format!("unknown stage {s:?}; stages are corpus, mutate, generate, diff, metrics, stats, report"))
    }
}

/// Ledger artifact: per-provider ledgers plus the tests that could not be run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerFile {
    pub ledgers: Vec<DiffLedger>,
    pub skipped: Vec<SkippedTest>,
}

pub fn pretty<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("artifacts serialise");
    v.push(b'\n');
    v
}

pub fn parse_template(bytes: &[u8]) -> anyhow::Result<TestCase> {
    serde_json::from_slice(bytes).context("template must be a JSON object")
}

pub fn load_faults(path: Option<&Path>) -> anyhow::Result<FaultConfig> {
    match path {
        None => Ok(FaultConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

/// Reads and cross-checks a rule set with its schema.
pub fn parse_rules(rules: &[u8], schema: &[u8]) -> anyhow::Result<(Vec<Rule>, Schema)> {
    let schema = schema_from_json(std::str::from_utf8(schema)?)?;
    let rules = rules_from_json(std::str::from_utf8(rules)?)?;
    check_rules(&rules, &schema)?;
    Ok((rules, schema))
}

pub fn build_provider(
    cfg: &ProviderConfig,
    name: &str,
    schema: &Schema,
) -> anyhow::Result<Box<dyn CompletionProvider>> {
    Ok(match cfg {
        ProviderConfig::Mock { scenario, .. } => {
            let mut s = match scenario {
                Some(p) => serde_json::from_str::<Scenario>(
                    &std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
                )
                .with_context(|| format!("parsing {}", p.display()))?,
                None => Scenario::default(),
            };
            s.name = name.to_string();
            Box::new(MockProvider::new(s, schema.clone())?)
        }
        ProviderConfig::Http { combined } => Box::new(ChatProvider::from_env()?.combined(*combined)),
    })
}

pub fn generate_records(
    rules: &[Rule],
    providers: &[Box<dyn CompletionProvider>],
    opts: &GenerateOptions,
) -> anyhow::Result<Vec<GenerationRecord>> {
    let mut out = Vec::new();
    for p in providers {
        log::info!("generating with {} for {} rules x {} repetitions", p.name(), rules.len(), opts.reps);
        out.extend(generate_all(rules, p.as_ref(), opts)?);
    }
    Ok(out)
}

/// Where the diff stage sends messages. Keeps an embedded server alive while in use.
pub struct ServiceHandle {
    client: ServiceClient,
    _server: Option<EmbeddedServer>,
}

impl ServiceHandle {
    pub fn remote(url: &str) -> Self {
        ServiceHandle { client: ServiceClient::new(url), _server: None }
    }

    pub fn embedded(sim: Simulator) -> anyhow::Result<Self> {
        let server = EmbeddedServer::start(sim).context("starting embedded service")?;
        log::info!("embedded service on {}", server.url());
        Ok(ServiceHandle { client: ServiceClient::new(&server.url()), _server: Some(server) })
    }

    pub fn service(&self) -> &dyn ValidationService {
        &self.client
    }
}

pub struct DiffArtifacts {
    pub run: DiffRun,
    pub ledgers: Vec<DiffLedger>,
}

impl DiffArtifacts {
    pub fn diff_jsonl(&self) -> Vec<u8> {
        records_to_jsonl(&self.run.records).into_bytes()
    }

    pub fn ledger_json(&self) -> Vec<u8> {
        pretty(&LedgerFile { ledgers: self.ledgers.clone(), skipped: self.run.skipped.clone() })
    }

    pub fn ledger_csv(&self) -> Vec<u8> {
        ledger_csv(&self.ledgers).into_bytes()
    }
}

#[allow(clippy::too_many_arguments)]
pub fn run_diff(
    rules: &[Rule],
    schema: &Schema,
    template: &TestCase,
    generations: &[GenerationRecord],
    service: &dyn ValidationService,
    retries: u32,
    exec: Execution,
) -> DiffArtifacts {
    let ctx = DiffContext {
        schema,
        template,
        service,
        retry: RetryPolicy { retries, base_delay: Duration::from_millis(200) },
    };
    let run = run_generations(rules, generations, &ctx, exec);
    if !run.skipped.is_empty() {
        log::warn!("{} tests could not be executed and are left out of the ledger", run.skipped.len());
    }
    let ledgers = ledger(&run.records);
    DiffArtifacts { run, ledgers }
}

/// Per-provider latency summary.
pub fn timing_csv(generations: &[GenerationRecord]) -> Vec<u8> {
    let mut by: std::collections::BTreeMap<&str, Vec<f64>> = Default::default();
    for g in generations {
        by.entry(&g.provider).or_default().push(g.latency_s);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["provider", "n", "mean_s", "median_s", "min_s", "max_s"]).expect("in-memory write");
    for (p, mut v) in by {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        let mean = v.iter().sum::<f64>() / n as f64;
        w.write_record([
            p.to_string(),
            n.to_string(),
            format!("{mean:.6}"),
            format!("{median:.6}"),
            format!("{:.6}", v[0]),
            format!("{:.6}", v[n - 1]),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn apply_thread_limit(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::debug!("thread pool already configured: {e}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stages to execute; all when `None`.
    pub stages: Option<Vec<Stage>>,
    /// Earlier run whose artifacts feed the stages that are not re-executed. Artifacts of stages
    /// downstream of a requested stage are not carried over.
    pub resume: Option<PathBuf>,
}

struct RunCtx<'a> {
    dir: PathBuf,
    cfg: &'a RunConfig,
    manifest: Manifest,
    exec: Execution,
}

impl RunCtx<'_> {
    fn read(&self, name: &str) -> anyhow::Result<Vec<u8>> {
        if !self.dir.join(name).exists() {
            let hint = Stage::producer(name).map(|s| format!("; run stage `{s}` first")).unwrap_or_default();
            return Err(anyhow!("missing input {name}{hint}"));
        }
        self.manifest.verify(&self.dir, name)
    }

    fn read_str(&self, name: &str) -> anyhow::Result<String> {
        Ok(String::from_utf8(self.read(name)?)?)
    }

    fn write(&mut self, stage: Stage, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.manifest
            .artifacts
            .insert(name.to_string(), ArtifactEntry { stage: stage.name().to_string(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    fn rules(&self) -> anyhow::Result<(Vec<Rule>, Schema)> {
        parse_rules(&self.read(art::RULES)?, &self.read(art::SCHEMA)?)
    }

    fn mutants(&self) -> anyhow::Result<Vec<Rule>> {
        Ok(rules_from_json(&self.read_str(art::MUTANTS)?)?)
    }

    fn generations(&self) -> anyhow::Result<Vec<GenerationRecord>> {
        Ok(records_from_jsonl(&self.read_str(art::GENERATIONS)?)?)
    }

    fn run_stage(&mut self, stage: Stage) -> anyhow::Result<()> {
        let cfg = self.cfg;
        match stage {
            Stage::Corpus => {
                let corpus = match (&cfg.rules, &cfg.schema, &cfg.template) {
                    (Some(r), Some(s), Some(t)) => {
                        let (rules, schema) = parse_rules(&std::fs::read(r)?, &std::fs::read(s)?)?;
                        let template = parse_template(&std::fs::read(t)?)?;
                        Corpus { rules, schema, template }
                    }
                    _ => generate_corpus(&CorpusSpec { count: cfg.corpus.count, quota: cfg.corpus.quota, seed: cfg.seed })?,
                };
                self.write(stage, art::RULES, rules_to_json(&corpus.rules).as_bytes())?;
                self.write(stage, art::SCHEMA, schema_to_json(&corpus.schema).as_bytes())?;
                self.write(stage, art::TEMPLATE, &pretty(&corpus.template))?;
            }
            Stage::Mutate => {
                let (rules, _) = self.rules()?;
                let mutants = mutate_all(&rules, self.exec);
                let mutant_rules: Vec<Rule> = mutants.iter().map(|m| m.rule.clone()).collect();
                let map: Vec<MutantInfo> = mutants.iter().map(|m| m.info()).collect();
                self.write(stage, art::MUTANTS, rules_to_json(&mutant_rules).as_bytes())?;
                self.write(stage, art::MUTANT_MAP, &pretty(&map))?;
            }
            Stage::Generate => {
                let (mut rules, schema) = self.rules()?;
                rules.extend(self.mutants()?);
                let names = cfg.provider_names();
                let providers = cfg
                    .providers
                    .iter()
                    .zip(&names)
                    .map(|(p, n)| build_provider(p, n, &schema))
                    .collect::<anyhow::Result<Vec<_>>>()?;
                let opts = GenerateOptions {
                    reps: cfg.reps,
                    temperature: cfg.temperature,
                    seed: cfg.seed,
                    retry: RetryPolicy { retries: cfg.retries, ..RetryPolicy::default() },
                    exec: self.exec,
                };
                let records = generate_records(&rules, &providers, &opts)?;
                self.write(stage, art::GENERATIONS, records_to_jsonl(&records).as_bytes())?;
            }
            Stage::Diff => {
                let (rules, schema) = self.rules()?;
                let template = parse_template(&self.read(art::TEMPLATE)?)?;
                let generations = self.generations()?;
                let handle = match &cfg.service_url {
                    Some(url) => ServiceHandle::remote(url),
                    None => {
                        let faults = load_faults(cfg.faults.as_deref())?;
                        ServiceHandle::embedded(Simulator::new(rules.clone(), schema.clone(), faults)?)?
                    }
                };
                let out =
                    run_diff(&rules, &schema, &template, &generations, handle.service(), cfg.retries, self.exec);
                self.write(stage, art::DIFF, &out.diff_jsonl())?;
                self.write(stage, art::LEDGER_JSON, &out.ledger_json())?;
                self.write(stage, art::LEDGER_CSV, &out.ledger_csv())?;
            }
            Stage::Metrics => {
                let (mut rules, schema) = self.rules()?;
                rules.extend(self.mutants()?);
                let map: Vec<MutantInfo> = serde_json::from_slice(&self.read(art::MUTANT_MAP)?)?;
                let rows = compute(&rules, &map, &schema, &self.generations()?, self.exec)?;
                self.write(stage, art::METRICS, metrics_csv(&rows).as_bytes())?;
            }
            Stage::Stats => {
                let rows: Vec<MetricRow> = metrics_from_csv(&self.read_str(art::METRICS)?)?;
                let comparisons = compare_metrics(&rows, &cfg.metrics, cfg.alpha, self.exec)?;
                self.write(stage, art::STATS_CSV, stats_csv(&comparisons).as_bytes())?;
                self.write(stage, art::STATS_JSON, &pretty(&comparisons))?;
                self.write(stage, art::TIMING, &timing_csv(&self.generations()?))?;
            }
            Stage::Report => {
                let (rules, _) = self.rules()?;
                let map: Vec<MutantInfo> = serde_json::from_slice(&self.read(art::MUTANT_MAP)?)?;
                let ledger: LedgerFile = serde_json::from_slice(&self.read(art::LEDGER_JSON)?)?;
                let rows = metrics_from_csv(&self.read_str(art::METRICS)?)?;
                let comparisons: Vec<Comparison> = serde_json::from_slice(&self.read(art::STATS_JSON)?)?;
                let report =
                    build_report(cfg.seed, cfg.alpha, &rules, &map, &self.generations()?, &ledger, &rows, &comparisons);
                self.write(stage, art::REPORT_JSON, &pretty(&report))?;
                self.write(stage, art::REPORT_TXT, render_text(&report).as_bytes())?;
            }
        }
        Ok(())
    }
}

fn config_value(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serialises")
}

/// Runs the requested stages in a fresh run directory and returns its path.
pub fn run_pipeline(cfg: &RunConfig, opts: &RunOptions) -> CliResult<PathBuf> {
    cfg.validate().map_err(CliError::Config)?;
    let mut stages = opts.stages.clone().unwrap_or_else(|| Stage::ALL.to_vec());
    stages.sort();
    stages.dedup();
    if stages.contains(&Stage::Diff) && cfg.service_url.is_none() && !cfg.serve_embedded {
        return Err(CliError::Config(anyhow!("the diff stage needs a service URL or an embedded service")));
    }
    let source = match &opts.resume {
        Some(dir) => Some((dir.clone(), Manifest::load(dir).map_err(CliError::Config)?)),
        None => None,
    };
    apply_thread_limit(cfg.threads);

    let dir = new_run_dir(&cfg.out_dir()).map_err(CliError::Config)?;
    log::info!("run directory {}", dir.display());
    let mut ctx = RunCtx {
        dir: dir.clone(),
        cfg,
        manifest: Manifest {
            seed: cfg.seed,
            config: config_value(cfg),
            stages: Vec::new(),
            resumed_from: source.as_ref().map(|(d, _)| d.display().to_string()),
            artifacts: Default::default(),
        },
        exec: cfg.exec(),
    };

    if let Some((src, manifest)) = &source {
        let stale = Stage::downstream(&stages);
        for (name, entry) in &manifest.artifacts {
            if Stage::producer(name).is_some_and(|s| stale.contains(&s)) {
                continue;
            }
            let bytes = manifest.verify(src, name).map_err(|e| CliError::stage("resume", e))?;
            std::fs::write(dir.join(name), &bytes)
                .with_context(|| format!("copying {name}"))
                .map_err(|e| CliError::stage("resume", e))?;
            ctx.manifest.artifacts.insert(name.clone(), entry.clone());
        }
    }

    for stage in stages {
        log::info!("stage {stage}");
        let result = ctx.run_stage(stage);
        if result.is_ok() {
            ctx.manifest.stages.push(stage.name().to_string());
        }
        ctx.manifest.save(&dir).map_err(|e| CliError::stage(stage.name(), e))?;
        result.map_err(|e| CliError::stage(stage.name(), e))?;
    }
    Ok(dir)
}

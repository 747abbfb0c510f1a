use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use rulediff_cli::artifacts::{self as art, Manifest};
use rulediff_cli::pipeline::{
    build_provider, generate_records, load_faults, parse_rules, parse_template, pretty, run_diff, LedgerFile,
    ServiceHandle,
};
use rulediff_cli::report::{build_report, render_text};
use rulediff_cli::{run_pipeline, CliError, CliResult, ProviderConfig, RunConfig, RunOptions, Stage};
use rulediff_core::corpus::{generate_corpus, CorpusSpec};
use rulediff_core::difftest::embed;
use rulediff_core::metrics::{compute, metrics_csv, metrics_from_csv};
use rulediff_core::mutation::{mutate_all, MutantInfo};
use rulediff_core::reference::validate_json;
use rulediff_core::rule::{rules_from_json, rules_to_json, schema_to_json};
use rulediff_core::sim::{Message, Simulator};
use rulediff_core::stats::{compare_metrics, metric_names, stats_csv, Comparison, DEFAULT_ALPHA};
use rulediff_core::testgen::{
    records_from_jsonl, records_to_jsonl, GenerateOptions, GenerationRecord, RetryPolicy, DEFAULT_REPS,
    DEFAULT_TEMPERATURE,
};
use rulediff_core::Execution;

#[derive(Parser)]
#[command(name = "rulediff", version, about = "Differential testing of tri-state validation rules")]
struct Cli {
    /// More logging; repeat for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesise a rule corpus with schema and message template.
    Corpus {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 3)]
        quota: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write all first-order mutants of a rule set and the mutant map.
    Mutate {
        #[arg(long)]
        rules: PathBuf,
        /// Output directory for mutants.json and mutant-map.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Ask a provider for test cases.
    Generate(GenerateArgs),
    /// Execute generated tests against the reference and a service.
    Diff(DiffArgs),
    /// Completion, success and robustness indices.
    Metrics {
        #[arg(long)]
        generations: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        mutants: PathBuf,
        #[arg(long)]
        mutant_map: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Kruskal-Wallis, Dunn and effect sizes across providers.
    Stats {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, value_enum, default_value_t = GroupBy::Provider)]
        group_by: GroupBy,
        /// Metric to compare; repeat for several. All when omitted.
        #[arg(long = "metric")]
        metric: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild the report of a run directory and print it.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Serve the simulated validation service over HTTP.
    Serve {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        faults: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
    /// Run pipeline stages, or validate one record with `--engine`.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupBy {
    Provider,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProviderKind {
    Mock,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum Engine {
    Ref,
    Sim,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    rules: PathBuf,
    /// Needed by the mock provider to build its test cases.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ProviderKind::Mock)]
    provider: ProviderKind,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    /// Send system and user prompt as one message.
    #[arg(long)]
    combined: bool,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: u32,
    #[arg(long, default_value_t = DEFAULT_TEMPERATURE)]
    temperature: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    retries: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiffArgs {
    #[arg(long)]
    tests: PathBuf,
    #[arg(long)]
    rules: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    template: PathBuf,
    #[arg(long, conflicts_with = "serve_embedded")]
    service: Option<String>,
    #[arg(long)]
    serve_embedded: bool,
    #[arg(long, requires = "serve_embedded")]
    faults: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    retries: u32,
    /// diff.jsonl; ledger.json and ledger.csv go next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parent of the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated stages to execute.
    #[arg(long, value_delimiter = ',')]
    stages: Option<Vec<Stage>>,
    /// Earlier run directory supplying the artifacts of stages not executed.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    serve_embedded: bool,
    #[arg(long)]
    service: Option<String>,
    #[arg(long)]
    faults: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Validate a single record instead of running the pipeline.
    #[arg(long, value_enum, requires_all = ["rules", "schema", "record"])]
    engine: Option<Engine>,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    record: Option<PathBuf>,
    /// Message the record is embedded into for `--engine sim`.
    #[arg(long)]
    template: Option<PathBuf>,
}

fn config_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Config(e.into())
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display())).map_err(config_err)
}

fn read_str(path: &Path) -> CliResult<String> {
    String::from_utf8(read(path)?).with_context(|| format!("{} is not UTF-8", path.display())).map_err(config_err)
}

fn write(path: &Path, bytes: &[u8], stage: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::stage(stage, e.into()))?;
    }
    std::fs::write(path, bytes)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(|e| CliError::stage(stage, e))
}

fn load_rules(rules: &Path, schema: &Path) -> CliResult<(Vec<rulediff_core::rule::Rule>, rulediff_core::rule::Schema)> {
    parse_rules(&read(rules)?, &read(schema)?).map_err(config_err)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match cli.command {
        Command::Corpus { seed, count, quota, out } => {
            let corpus = generate_corpus(&CorpusSpec { count, quota, seed }).map_err(config_err)?;
            write(&out.join(art::RULES), rules_to_json(&corpus.rules).as_bytes(), "corpus")?;
            write(&out.join(art::SCHEMA), schema_to_json(&corpus.schema).as_bytes(), "corpus")?;
            write(&out.join(art::TEMPLATE), &pretty(&corpus.template), "corpus")?;
            println!("{} rules written to {}", corpus.rules.len(), out.display());
        }
        Command::Mutate { rules, out } => {
            let rules = rules_from_json(&read_str(&rules)?).map_err(config_err)?;
            let mutants = mutate_all(&rules, exec);
            let map: Vec<MutantInfo> = mutants.iter().map(|m| m.info()).collect();
            let mutant_rules: Vec<_> = mutants.into_iter().map(|m| m.rule).collect();
            write(&out.join(art::MUTANTS), rules_to_json(&mutant_rules).as_bytes(), "mutate")?;
            write(&out.join(art::MUTANT_MAP), &pretty(&map), "mutate")?;
            println!("{} mutants of {} rules", map.len(), rules.len());
        }
        Command::Generate(a) => generate(a, exec)?,
        Command::Diff(a) => diff(a, exec)?,
        Command::Metrics { generations, rules, schema, mutants, mutant_map, out } => {
            let (mut rules, schema) = load_rules(&rules, &schema)?;
            rules.extend(rules_from_json(&read_str(&mutants)?).map_err(config_err)?);
            let map: Vec<MutantInfo> = serde_json::from_slice(&read(&mutant_map)?).map_err(config_err)?;
            let gens: Vec<GenerationRecord> = records_from_jsonl(&read_str(&generations)?).map_err(config_err)?;
            let rows = compute(&rules, &map, &schema, &gens, exec).map_err(|e| CliError::stage("metrics", e.into()))?;
            write(&out, metrics_csv(&rows).as_bytes(), "metrics")?;
        }
        Command::Stats { metrics, group_by: GroupBy::Provider, metric, alpha, out } => {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(config_err(anyhow!("alpha must lie strictly between 0 and 1")));
            }
            let rows = metrics_from_csv(&read_str(&metrics)?).map_err(config_err)?;
            let metric = if metric.is_empty() { metric_names() } else { metric };
            let comparisons =
                compare_metrics(&rows, &metric, alpha, exec).map_err(|e| CliError::stage("stats", e.into()))?;
            write(&out, stats_csv(&comparisons).as_bytes(), "stats")?;
            print!("{}", rulediff_cli::report::render_comparisons(&comparisons, alpha));
        }
        Command::Report { run } => {
            let text = report(&run)?;
            print!("{text}");
        }
        Command::Serve { rules, schema, faults, port, host } => {
            let (rules, schema) = load_rules(&rules, &schema)?;
            let faults = load_faults(faults.as_deref()).map_err(config_err)?;
            let sim = Simulator::new(rules, schema, faults).map_err(config_err)?;
            rulediff_service::serve(SocketAddr::new(host, port), sim).map_err(|e| CliError::stage("serve", e.into()))?;
        }
        Command::Run(a) => match a.engine {
            Some(engine) => run_engine(engine, &a)?,
            None => {
                let mut cfg = match &a.config {
                    Some(p) => RunConfig::load(p).map_err(config_err)?,
                    None => RunConfig::default(),
                };
                if let Some(out) = a.out {
                    cfg.out = Some(out);
                }
                if let Some(seed) = a.seed {
                    cfg.seed = seed;
                }
                if a.serve_embedded {
                    cfg.serve_embedded = true;
                }
                if a.service.is_some() {
                    cfg.service_url = a.service;
                }
                if a.faults.is_some() {
                    cfg.faults = a.faults;
                }
                for (field, value) in [(&mut cfg.rules, &a.rules), (&mut cfg.schema, &a.schema), (&mut cfg.template, &a.template)] {
                    if value.is_some() {
                        *field = value.clone();
                    }
                }
                if a.threads.is_some() {
                    cfg.threads = a.threads;
                }
                if cli.sequential {
                    cfg.parallel = false;
                }
                let dir = run_pipeline(&cfg, &RunOptions { stages: a.stages, resume: a.resume })?;
                println!("{}", dir.display());
            }
        },
    }
    Ok(())
}

fn generate(a: GenerateArgs, exec: Execution) -> CliResult<()> {
    let rules = rules_from_json(&read_str(&a.rules)?).map_err(config_err)?;
    let schema = match (&a.schema, a.provider) {
        (Some(s), _) => {
            let (_, schema) = load_rules(&a.rules, s)?;
            schema
        }
        (None, ProviderKind::Mock) => return Err(config_err(anyhow!("the mock provider needs --schema"))),
        (None, ProviderKind::Http) => Default::default(),
    };
    if a.reps == 0 {
        return Err(config_err(anyhow!("reps must be at least 1")));
    }
    let cfg = match a.provider {
        ProviderKind::Mock => ProviderConfig::Mock { name: a.name.clone(), scenario: a.scenario.clone() },
        ProviderKind::Http => ProviderConfig::Http { combined: a.combined },
    };
    let name = RunConfig { providers: vec![cfg.clone()], ..RunConfig::default() }.provider_names().remove(0);
    let provider = build_provider(&cfg, &name, &schema).map_err(config_err)?;
    let opts = GenerateOptions {
        reps: a.reps,
        temperature: a.temperature,
        seed: a.seed,
        retry: RetryPolicy { retries: a.retries, ..RetryPolicy::default() },
        exec,
    };
    let records = generate_records(&rules, &[provider], &opts).map_err(|e| CliError::stage("generate", e))?;
    write(&a.out, records_to_jsonl(&records).as_bytes(), "generate")
}

fn diff(a: DiffArgs, exec: Execution) -> CliResult<()> {
    let (rules, schema) = load_rules(&a.rules, &a.schema)?;
    let template = parse_template(&read(&a.template)?).map_err(config_err)?;
    let gens: Vec<GenerationRecord> = records_from_jsonl(&read_str(&a.tests)?).map_err(config_err)?;
    let handle = match (&a.service, a.serve_embedded) {
        (Some(url), _) => ServiceHandle::remote(url),
        (None, true) => {
            let faults = load_faults(a.faults.as_deref()).map_err(config_err)?;
            let sim = Simulator::new(rules.clone(), schema.clone(), faults).map_err(config_err)?;
            ServiceHandle::embedded(sim).map_err(|e| CliError::stage("diff", e))?
        }
        (None, false) => return Err(config_err(anyhow!("give --service URL or --serve-embedded"))),
    };
    let out = run_diff(&rules, &schema, &template, &gens, handle.service(), a.retries, exec);
    let dir = a.out.parent().unwrap_or(Path::new(""));
    write(&a.out, &out.diff_jsonl(), "diff")?;
    write(&dir.join(art::LEDGER_JSON), &out.ledger_json(), "diff")?;
    write(&dir.join(art::LEDGER_CSV), &out.ledger_csv(), "diff")?;
    for l in &out.ledgers {
        print!("{}", rulediff_cli::report::render_ledger(l));
    }
    Ok(())
}

fn report(run: &Path) -> CliResult<String> {
    let manifest = Manifest::load(run).map_err(config_err)?;
    let get = |name: &str| manifest.verify(run, name).map_err(|e| CliError::stage("report", e));
    let text = |name: &str| -> CliResult<String> {
        String::from_utf8(get(name)?).map_err(|e| CliError::stage("report", e.into()))
    };
    let stage = |e: anyhow::Error| CliError::stage("report", e);
    let (rules, _) = parse_rules(&get(art::RULES)?, &get(art::SCHEMA)?).map_err(stage)?;
    let map: Vec<MutantInfo> = serde_json::from_slice(&get(art::MUTANT_MAP)?).map_err(|e| stage(e.into()))?;
    let gens: Vec<GenerationRecord> = records_from_jsonl(&text(art::GENERATIONS)?).map_err(|e| stage(e.into()))?;
    let ledger: LedgerFile = serde_json::from_slice(&get(art::LEDGER_JSON)?).map_err(|e| stage(e.into()))?;
    let rows = metrics_from_csv(&text(art::METRICS)?).map_err(|e| stage(e.into()))?;
    let comparisons: Vec<Comparison> =
        serde_json::from_slice(&get(art::STATS_JSON)?).map_err(|e| stage(e.into()))?;
    let alpha = manifest.config.get("alpha").and_then(|v| v.as_f64()).unwrap_or(DEFAULT_ALPHA);
    Ok(render_text(&build_report(manifest.seed, alpha, &rules, &map, &gens, &ledger, &rows, &comparisons)))
}

fn run_engine(engine: Engine, a: &RunArgs) -> CliResult<()> {
    let (Some(rules), Some(schema), Some(record)) = (&a.rules, &a.schema, &a.record) else {
        return Err(config_err(anyhow!("--engine needs --rules, --schema and --record")));
    };
    let (rules, schema) = load_rules(rules, schema)?;
    let test: Message = serde_json::from_slice(&read(record)?)
        .with_context(|| format!("{} must hold a JSON object", record.display()))
        .map_err(config_err)?;
    let out = match engine {
        Engine::Ref => rules
            .iter()
            .map(|r| json!({"ruleId": r.id, "version": r.version, "result": validate_json(r, &test, &schema).to_string()}))
            .collect::<Vec<_>>(),
        Engine::Sim => {
            let message = match &a.template {
                Some(t) => {
                    let template = parse_template(&read(t)?).map_err(config_err)?;
                    embed(&test, &template, &schema).map_err(config_err)?
                }
                None => test,
            };
            let faults = load_faults(a.faults.as_deref()).map_err(config_err)?;
            let sim = Simulator::new(rules.clone(), schema, faults).map_err(config_err)?;
            let response = sim.validate_message(&message);
            rules
                .iter()
                .map(|r| json!({"ruleId": r.id, "version": r.version, "result": response.result_for(&r.key()).as_str()}))
                .collect()
        }
    };
    println!("{}", serde_json::to_string_pretty(&out).map_err(|e| CliError::stage("run", e.into()))?);
    Ok(())
}


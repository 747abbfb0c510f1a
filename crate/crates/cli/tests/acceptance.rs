//! One PASS/FAIL line per acceptance criterion; exits nonzero when any fails.

#[path = "../../core/tests/support/truth_table.rs"]
mod truth_table;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rulediff_cli::artifacts::without_latency;
use rulediff_cli::pipeline::{run_diff, ServiceHandle};
use rulediff_cli::{run_pipeline, ProviderConfig, RunConfig, RunOptions};
use rulediff_core::corpus::{generate_corpus, oracle_tests_styled, CorpusSpec};
use rulediff_core::difftest::{ledger, DiffLedger, DiffRecord, Verdict};
use rulediff_core::gen::RuleGenerator;
use rulediff_core::metrics::success_index;
use rulediff_core::mutation::{mutate_all, sites, MutationOperator};
use rulediff_core::reference::RefOutcome;
use rulediff_core::rule::{
    categorize, load_rules, schema_from_json, DateStyle, Rule, Schema, TriState, ValueType,
};
use rulediff_core::sim::{Downgrade, FaultConfig, ServiceResult, Simulator, VersionPolicy, VersionStatus};
use rulediff_core::stats::{kruskal_wallis, EffectSize, SampleGroup};
use rulediff_core::testgen::{parse_response, GenerationRecord, ParseOutcome, TestCase, TestIntent};
use rulediff_core::Execution;

fn manifest_dir() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

fn fixture(name: &str) -> PathBuf {
    manifest_dir().join("tests/fixtures").join(name)
}

fn golden_corpus(name: &str) -> PathBuf {
    manifest_dir().join("../core/tests/fixtures/golden_corpus").join(name)
}

struct Golden {
    rules: Vec<Rule>,
    schema: Schema,
    template: TestCase,
}

fn load_golden() -> Result<Golden> {
    let rules = load_rules(&golden_corpus("rules.json"))?;
    let schema = schema_from_json(&std::fs::read_to_string(golden_corpus("schema.json"))?)?;
    let template = serde_json::from_str(&std::fs::read_to_string(golden_corpus("template.json"))?)?;
    Ok(Golden { rules, schema, template })
}

fn tri_state_oracle() -> Result<String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut pairs, mut disagreements) = (0usize, 0usize);
    for _ in 0..500 {
        let g = RuleGenerator::random_small(&mut rng);
        ensure!(g.vars.len() <= 4, "generator produced {} variables", g.vars.len());
        ensure!(g.vars.iter().all(|v| v.domain.len() <= 3), "generator produced a domain over 3 values");
        let rule = g.rule(&mut rng);
        for record in g.records() {
            pairs += 1;
            if categorize(&rule, &record).ok() != truth_table::outcome(&rule, &record) {
                disagreements += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure!(disagreements == 0, "{disagreements} of {pairs} pairs disagree");
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("{pairs} pairs agree in {:.2}s", elapsed.as_secs_f64()))
}

fn si_example() -> Result<String> {
    let expected = (1.0 - 250f64.sqrt() / (30.0 * 2f64.sqrt())) * 100.0;
    let got = success_index(25, 15, 30)?;
    ensure!((got - 62.732).abs() <= 0.001, "SI(25, 15, 30) = {got}");
    ensure!((got - expected).abs() < 1e-9, "SI(25, 15, 30) = {got}, hand derivation {expected}");
    Ok(format!("SI(25, 15, 30) = {got:.4}"))
}

fn kruskal_example() -> Result<String> {
    let g = |l: &str, v: &[f64]| SampleGroup::new(l, v.to_vec());
    let kw = kruskal_wallis(&[g("a", &[1., 2., 3.]), g("b", &[4., 5., 6.]), g("c", &[7., 8., 9.])])?;
    ensure!((kw.h - 7.2).abs() < 1e-9, "H = {}", kw.h);
    let flat = kruskal_wallis(&[g("a", &[5., 5., 5.]), g("b", &[5., 5.]), g("c", &[5.])])?;
    ensure!(flat.h == 0.0 && flat.p == 1.0, "all-tied groups gave H = {}, p = {}", flat.h, flat.p);
    let same = kruskal_wallis(&[g("a", &[1., 2., 3.]), g("b", &[1., 2., 3.])])?;
    ensure!(same.h.abs() < 1e-12 && (same.p - 1.0).abs() < 1e-12, "identical groups gave H = {}, p = {}", same.h, same.p);
    Ok(format!("H = {:.10}, p = {:.6}", kw.h, kw.p))
}

fn effect_bands() -> Result<String> {
    let mut reader = csv::Reader::from_path(fixture("effect_size_bands.csv"))?;
    let (mut n, mut wrong) = (0, Vec::new());
    for row in reader.records() {
        let row = row?;
        let a12: f64 = row[0].parse()?;
        let got = EffectSize::from_a12(a12).magnitude.as_str();
        n += 1;
        if got != &row[1] {
            wrong.push(format!("{a12}: {got} != {}", &row[1]));
        }
    }
    ensure!(n >= 10, "fixture has only {n} rows");
    ensure!(wrong.is_empty(), "{} of {n} disagree: {}", wrong.len(), wrong.join("; "));
    Ok(format!("{n} of {n} printed labels reproduced"))
}

fn mutation_accounting() -> Result<String> {
    let golden: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(golden_corpus("mutation_counts.json"))?)?;
    let rules = load_rules(&golden_corpus("rules.json"))?;
    let mutants = mutate_all(&rules, Execution::Parallel);
    for op in MutationOperator::ALL {
        let site_count: usize = rules.iter().map(|r| sites(&r.expression, op).len()).sum();
        let mutant_count = mutants.iter().filter(|m| m.operator == op).count();
        let want_sites = golden["totals"][op.code()]["sites"].as_u64().context("golden sites")? as usize;
        let want_mutants = golden["totals"][op.code()]["mutants"].as_u64().context("golden mutants")? as usize;
        ensure!(site_count == want_sites, "{op}: {site_count} sites, golden {want_sites}");
        ensure!(mutant_count == want_mutants, "{op}: {mutant_count} mutants, golden {want_mutants}");
        for r in &rules {
            let got = sites(&r.expression, op).len() as u64;
            let want = golden["rules"][r.key().to_string()][op.code()].as_u64().context("golden rule entry")?;
            ensure!(got == want, "{} {op}: {got} sites, golden {want}", r.key());
        }
    }
    let three = rules.iter().find(|r| r.text().matches(" and ").count() == 3).context("no three-and rule")?;
    let co = mutants.iter().filter(|m| m.source == three.key() && m.operator == MutationOperator::Co).count();
    ensure!(co == 3, "three-and rule {} has {co} CO mutants", three.key());
    Ok(format!("{} mutants over {} rules match; {} has 3 CO mutants", mutants.len(), rules.len(), three.key()))
}

fn oracle_generations(rules: &[Rule], schema: &Schema, style: DateStyle, reps: u32) -> Result<Vec<GenerationRecord>> {
    let mut out = Vec::new();
    for r in rules {
        let tests = oracle_tests_styled(r, schema, style)?;
        for repetition in 1..=reps {
            out.push(GenerationRecord {
                provider: "oracle".into(),
                rule_id: r.id.clone(),
                version: r.version,
                repetition,
                raw: None,
                outcome: ParseOutcome::Parsed { tests: tests.clone() },
                latency_s: 0.0,
            });
        }
    }
    Ok(out)
}

fn diff_over_http(
    rules: &[Rule],
    schema: &Schema,
    template: &TestCase,
    generations: &[GenerationRecord],
    faults: FaultConfig,
) -> Result<(Vec<DiffRecord>, DiffLedger)> {
    let handle = ServiceHandle::embedded(Simulator::new(rules.to_vec(), schema.clone(), faults)?)?;
    let out = run_diff(rules, schema, template, generations, handle.service(), 0, Execution::Parallel);
    ensure!(out.run.skipped.is_empty(), "{} tests skipped", out.run.skipped.len());
    let [l] = <[DiffLedger; 1]>::try_from(out.ledgers).map_err(|v| anyhow::anyhow!("{} ledgers", v.len()))?;
    Ok((out.run.records, l))
}

fn mismatch_map(l: &DiffLedger) -> BTreeMap<ServiceResult, BTreeSet<String>> {
    l.rows
        .iter()
        .filter(|r| !r.mismatched.is_empty())
        .map(|r| (r.category, r.mismatched.iter().cloned().collect()))
        .collect()
}

fn baseline_soundness() -> Result<String> {
    let start = Instant::now();
    let golden = load_golden()?;
    let extra = generate_corpus(&CorpusSpec::new(40, 5))?;
    let mut tests = 0;
    for (rules, schema, template) in
        [(&golden.rules, &golden.schema, &golden.template), (&extra.rules, &extra.schema, &extra.template)]
    {
        let gens = oracle_generations(rules, schema, DateStyle::Iso, 10)?;
        let (records, l) = diff_over_http(rules, schema, template, &gens, FaultConfig::empty())?;
        tests += records.len();
        let bad = mismatch_map(&l);
        ensure!(bad.is_empty(), "mismatches: {bad:?}");
        ensure!(l.rows.iter().all(|r| r.match_count == l.executed.len()), "a category is below 100% match");
        ensure!(l.executed.len() == rules.len(), "{} of {} rules executed", l.executed.len(), rules.len());
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!("{tests} tests, 0 mismatches over HTTP in {:.2}s", elapsed.as_secs_f64()))
}

fn label(rules: &[Rule], r: &Rule) -> String {
    if rules.iter().filter(|o| o.id == r.id).count() > 1 {
        r.key().to_string()
    } else {
        r.id.clone()
    }
}

fn has_dated_value(tests: &[&TestCase], schema: &Schema) -> bool {
    tests.iter().any(|t| {
        t.iter().any(|(k, v)| schema.get(k) == Some(ValueType::Date) && !v.is_null())
    })
}

struct FaultCase {
    name: &'static str,
    faults: FaultConfig,
    style: DateStyle,
    expected: BTreeMap<ServiceResult, BTreeSet<String>>,
}

fn fault_cases(g: &Golden) -> Result<Vec<FaultCase>> {
    let set = |items: &[&str]| items.iter().map(|s| s.to_string()).collect::<BTreeSet<String>>();
    let base = FaultConfig::empty();

    let version = FaultConfig {
        version_policy: vec![
            VersionPolicy { id: "V01".into(), version: 1, status: VersionStatus::Inactive, downgrade: Downgrade::Fail },
            VersionPolicy {
                id: "V02".into(),
                version: 1,
                status: VersionStatus::Inactive,
                downgrade: Downgrade::NotApplied,
            },
        ],
        ..base.clone()
    };

    let mut dated = BTreeSet::new();
    for r in &g.rules {
        let t = oracle_tests_styled(r, &g.schema, DateStyle::DayFirst)?;
        let cases: Vec<&TestCase> = TestIntent::ALL.iter().map(|i| t.case(*i)).collect();
        if has_dated_value(&cases, &g.schema) {
            dated.insert(label(&g.rules, r));
        }
    }
    ensure!(!dated.is_empty(), "no golden rule has dated tests");
    let strict = FaultConfig { strict_date_format: Some("YYYY-MM-DD".into()), ..base.clone() };

    let ds_rules: BTreeSet<String> = g
        .rules
        .iter()
        .filter(|r| r.expression.variables().contains("ds"))
        .map(|r| label(&g.rules, r))
        .collect();
    ensure!(!ds_rules.is_empty(), "no golden rule reads ds");
    let pre = FaultConfig { pre_aggregation_vars: set(&["ds"]), ..base.clone() };

    let warning = FaultConfig { warning_rules: set(&["V04"]), ..base.clone() };
    let never = FaultConfig { always_not_applied_rules: set(&["V06"]), ..base.clone() };

    Ok(vec![
        FaultCase {
            name: "version policy",
            faults: version,
            style: DateStyle::Iso,
            expected: BTreeMap::from([
                (ServiceResult::Fail, set(&["V01/1"])),
                (ServiceResult::NotApplied, set(&["V02/1"])),
            ]),
        },
        FaultCase {
            name: "strict date",
            faults: strict,
            style: DateStyle::DayFirst,
            expected: BTreeMap::from([(ServiceResult::Http500, dated)]),
        },
        FaultCase {
            name: "pre-aggregation",
            faults: pre,
            style: DateStyle::Iso,
            expected: BTreeMap::from([(ServiceResult::EmptyResponse, ds_rules)]),
        },
        FaultCase {
            name: "warning",
            faults: warning,
            style: DateStyle::Iso,
            expected: BTreeMap::from([(ServiceResult::Warning, set(&["V04"]))]),
        },
        FaultCase {
            name: "always NotApplied",
            faults: never,
            style: DateStyle::Iso,
            expected: BTreeMap::from([(ServiceResult::NotApplied, set(&["V06"]))]),
        },
    ])
}

fn combined_faults(cases: &[FaultCase]) -> FaultConfig {
    let mut all = FaultConfig::empty();
    for c in cases {
        let f = &c.faults;
        all.version_policy.extend(f.version_policy.iter().cloned());
        all.strict_date_format = all.strict_date_format.clone().or_else(|| f.strict_date_format.clone());
        all.pre_aggregation_vars.extend(f.pre_aggregation_vars.iter().cloned());
        all.warning_rules.extend(f.warning_rules.iter().cloned());
        all.always_not_applied_rules.extend(f.always_not_applied_rules.iter().cloned());
    }
    all
}

fn seeded_faults() -> Result<String> {
    let g = load_golden()?;
    let cases = fault_cases(&g)?;
    let mut summary = Vec::new();
    for c in &cases {
        let gens = oracle_generations(&g.rules, &g.schema, c.style, 3)?;
        let (_, l) = diff_over_http(&g.rules, &g.schema, &g.template, &gens, c.faults.clone())?;
        let got = mismatch_map(&l);
        ensure!(got == c.expected, "{}: flagged {got:?}, seeded {:?}", c.name, c.expected);
        let n: usize = got.values().map(BTreeSet::len).sum();
        summary.push(format!("{} {n}/{n}", c.name));
    }

    let day_first = ["V07", "V08"];
    let mut gens = Vec::new();
    for r in &g.rules {
        let style = if day_first.contains(&r.id.as_str()) { DateStyle::DayFirst } else { DateStyle::Iso };
        gens.extend(oracle_generations(std::slice::from_ref(r), &g.schema, style, 3)?);
    }
    let (records, l) = diff_over_http(&g.rules, &g.schema, &g.template, &gens, combined_faults(&cases))?;
    let set = |items: &[&str]| items.iter().map(|s| s.to_string()).collect::<BTreeSet<String>>();
    let expected = BTreeMap::from([
        (ServiceResult::Fail, set(&["V01/1"])),
        (ServiceResult::NotApplied, set(&["V02/1", "V06"])),
        (ServiceResult::Warning, set(&["V04"])),
        (ServiceResult::Http500, set(&day_first)),
        (ServiceResult::EmptyResponse, set(&["V03", "V05"])),
    ]);
    let got = mismatch_map(&l);
    ensure!(got == expected, "combined run flagged {got:?}, seeded {expected:?}");
    let csv = rulediff_core::difftest::ledger_csv(std::slice::from_ref(&l));
    if std::env::var_os("RULEDIFF_BLESS").is_some() {
        let dir = manifest_dir().join("../../target/bless");
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("combined_diff.jsonl"), rulediff_core::testgen::records_to_jsonl(&records))?;
        std::fs::write(dir.join("combined_ledger.csv"), &csv)?;
    }
    let golden = std::fs::read_to_string(fixture("combined_fault_ledger.csv"))?;
    if csv != golden {
        bail!("combined-fault ledger differs from golden:\n{csv}");
    }
    summary.push("combined run matches golden".into());
    Ok(summary.join(", "))
}

fn random_record(rng: &mut ChaCha8Rng, providers: &[&str]) -> DiffRecord {
    let ids = ["R1", "R2", "R3", "R4", "R5"];
    let results = ServiceResult::ALL;
    let reference = if rng.random_bool(0.1) {
        RefOutcome::EvalError("boom".into())
    } else {
        RefOutcome::Result([TriState::Pass, TriState::Fail, TriState::NotApplied][rng.random_range(0..3)])
    };
    let service = results[rng.random_range(0..results.len())];
    DiffRecord {
        provider: providers[rng.random_range(0..providers.len())].to_string(),
        rule_id: ids[rng.random_range(0..ids.len())].to_string(),
        version: rng.random_range(1..=2),
        intent: TestIntent::ALL[rng.random_range(0..3)],
        repetition: rng.random_range(1..=30),
        verdict: Verdict::of(&reference, service),
        reference,
        service,
    }
}

fn ledger_arithmetic() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cases = 1000;
    for case in 0..cases {
        let n = rng.random_range(1..60);
        let records: Vec<DiffRecord> = (0..n).map(|_| random_record(&mut rng, &["p1", "p2", "p3"])).collect();
        for l in ledger(&records) {
            let executed: BTreeSet<(String, u32)> = records
                .iter()
                .filter(|r| r.provider == l.provider)
                .map(|r| (r.rule_id.clone(), r.version))
                .collect();
            ensure!(l.executed.len() == executed.len(), "case {case}: executed count");
            for row in &l.rows {
                ensure!(
                    row.match_count + row.mismatch_count == executed.len(),
                    "case {case} {} {}: {} + {} != {}",
                    l.provider,
                    row.category,
                    row.match_count,
                    row.mismatch_count,
                    executed.len()
                );
            }
        }
    }
    Ok(format!("{cases} random record sets"))
}

fn determinism() -> Result<String> {
    let tmp = tempfile::tempdir()?;
    let scenario = tmp.path().join("noisy.json");
    std::fs::write(
        &scenario,
        r#"{"mix": {"correct": 0.5, "nearMiss": 0.1, "dateDrift": 0.1, "missingPairs": 0.1, "semanticAlteration": 0.1, "transportFailure": 0.1}}"#,
    )?;
    let cfg = RunConfig {
        providers: vec![
            ProviderConfig::Mock { name: None, scenario: None },
            ProviderConfig::Mock { name: None, scenario: Some(scenario) },
        ],
        reps: 4,
        seed: 31,
        serve_embedded: true,
        retries: 0,
        out: Some(tmp.path().join("runs")),
        ..RunConfig::default()
    };
    let a = run_pipeline(&cfg, &RunOptions::default())?;
    let b = run_pipeline(&cfg, &RunOptions::default())?;
    let names = |d: &Path| -> Result<BTreeSet<String>> {
        Ok(std::fs::read_dir(d)?.map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned())).collect::<Result<_, _>>()?)
    };
    let files = names(&a)?;
    ensure!(files == names(&b)?, "runs produced different file sets");
    let mut compared = 0;
    for f in &files {
        let x = without_latency(f, &std::fs::read(a.join(f))?)?;
        let y = without_latency(f, &std::fs::read(b.join(f))?)?;
        ensure!(x == y, "{f} differs between runs");
        compared += x.is_some() as usize;
    }
    Ok(format!("{compared} artifacts byte-identical without latency"))
}

fn hallucinations() -> Result<String> {
    #[derive(serde::Deserialize)]
    struct Case {
        label: String,
        text: String,
    }
    let cases: Vec<Case> = serde_json::from_str(&std::fs::read_to_string(fixture("hallucinations.json"))?)?;
    ensure!(cases.len() == 15, "fixture has {} cases", cases.len());
    let labels: BTreeSet<&str> = cases.iter().map(|c| c.label.as_str()).collect();
    ensure!(labels.len() == 8, "fixture covers {} categories", labels.len());
    let mut wrong = Vec::new();
    for (i, c) in cases.iter().enumerate() {
        let got = match parse_response(&c.text) {
            Ok(_) => "exactMatch".to_string(),
            Err(h) => h.label().to_string(),
        };
        if got != c.label {
            wrong.push(format!("#{i}: {got} != {}", c.label));
        }
    }
    ensure!(wrong.is_empty(), "{}", wrong.join("; "));
    Ok(format!("{0} of {0} cases agree", cases.len()))
}

type Check = fn() -> Result<String>;

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("tri-state oracle equivalence", tri_state_oracle),
        ("success index example", si_example),
        ("Kruskal-Wallis example", kruskal_example),
        ("effect-size bands", effect_bands),
        ("mutation accounting", mutation_accounting),
        ("differential baseline soundness", baseline_soundness),
        ("seeded-fault recall", seeded_faults),
        ("ledger arithmetic", ledger_arithmetic),
        ("determinism", determinism),
        ("hallucination classifier", hallucinations),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(anyhow::anyhow!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail} [{secs:.2}s]", i + 1),
            Err(e) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {e:#} [{secs:.2}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

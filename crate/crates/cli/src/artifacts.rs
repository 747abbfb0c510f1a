//! Artifact names, the run manifest and content hashing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const RULES: &str = "rules.json";
pub const SCHEMA: &str = "schema.json";
pub const TEMPLATE: &str = "template.json";
pub const MUTANTS: &str = "mutants.json";
pub const MUTANT_MAP: &str = "mutant-map.json";
pub const GENERATIONS: &str = "generations.jsonl";
pub const DIFF: &str = "diff.jsonl";
pub const LEDGER_JSON: &str = "ledger.json";
pub const LEDGER_CSV: &str = "ledger.csv";
pub const METRICS: &str = "metrics.csv";
pub const STATS_CSV: &str = "stats.csv";
pub const STATS_JSON: &str = "stats.json";
pub const TIMING: &str = "timing_stats.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const MANIFEST: &str = "manifest.json";

/// Artifacts whose bytes depend on measured latencies.
pub const LATENCY_BEARING: [&str; 2] = [GENERATIONS, TIMING];

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ArtifactEntry {
    pub stage: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub seed: u64,
    pub config: Value,
    /// Stages executed in this run directory, in order.
    pub stages: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resumed_from: Option<String>,
    pub artifacts: BTreeMap<String, ArtifactEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, dir: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(dir.join(MANIFEST), text).context("writing manifest")
    }

    /// Fails when the file on disk no longer has the recorded hash.
    pub fn verify(&self, dir: &Path, name: &str) -> anyhow::Result<Vec<u8>> {
        let path = dir.join(name);
        let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        if let Some(entry) = self.artifacts.get(name) {
            let actual = sha256_hex(&bytes);
            if actual != entry.sha256 {
                bail!("{} was modified after stage `{}` wrote it", path.display(), entry.stage);
            }
        }
        Ok(bytes)
    }
}

/// Creates the next free `run-NNN` directory under `parent`.
pub fn new_run_dir(parent: &Path) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    let mut next = 1 + std::fs::read_dir(parent)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str()?.strip_prefix("run-")?.parse::<u32>().ok())
        .max()
        .unwrap_or(0);
    loop {
        let dir = parent.join(format!("run-{next:03}"));
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => next += 1,
            Err(e) => return Err(e).with_context(|| format!("creating {}", dir.display())),
        }
    }
}

fn strip_latency(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.remove("latency_s");
            m.values_mut().for_each(strip_latency);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_latency),
        _ => {}
    }
}

/// Artifact content with every latency-derived part removed, or `None` when nothing else is left.
pub fn without_latency(name: &str, bytes: &[u8]) -> anyhow::Result<Option<Vec<u8>>> {
    if name == TIMING {
        return Ok(None);
    }
    if name == MANIFEST {
        let mut m: Manifest = serde_json::from_slice(bytes)?;
        for n in LATENCY_BEARING {
            m.artifacts.remove(n);
        }
        return Ok(Some(serde_json::to_vec(&m)?));
    }
    if name.ends_with(".jsonl") {
        let mut out = Vec::new();
        for line in bytes.split(|b| *b == b'\n').filter(|l| !l.is_empty()) {
            let mut v: Value = serde_json::from_slice(line)?;
            strip_latency(&mut v);
            out.extend(serde_json::to_vec(&v)?);
            out.push(b'\n');
        }
        return Ok(Some(out));
    }
    Ok(Some(bytes.to_vec()))
}

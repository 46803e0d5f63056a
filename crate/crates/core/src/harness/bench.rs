//! Benchmark runner over a directory of question files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::llm::{ChatClient, LlmError, MockBook};
use crate::search::{ElucidationQuestion, Engine, SearchConfig, Trace};

use super::metrics::{aggregate, compute_metrics, Aggregates, MetricRow, Metrics};
use super::HarnessError;

/// Source of one chat client per elucidation session.
pub trait SessionClients: Sync {
    fn session(&self, question_id: &str) -> Result<Box<dyn ChatClient + '_>, LlmError>;
}

impl SessionClients for MockBook {
    fn session(&self, question_id: &str) -> Result<Box<dyn ChatClient + '_>, LlmError> {
        Ok(Box::new(MockBook::session(self, question_id)?))
    }
}

/// Every session shares one client (and its rate limiter).
pub struct SharedClient<'a>(pub &'a dyn ChatClient);

impl SessionClients for SharedClient<'_> {
    fn session(&self, _question_id: &str) -> Result<Box<dyn ChatClient + '_>, LlmError> {
        Ok(Box::new(self.0))
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub search: SearchConfig,
    pub concurrency: usize,
    /// Report file, rewritten after every question and read back to resume.
    pub report: Option<PathBuf>,
    /// Directory receiving `<question id>.json` traces.
    pub traces: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { search: SearchConfig::default(), concurrency: 1, report: None, traces: None }
    }
}

pub const REPORT_NOTES: [&str; 3] = [
    "keys_fts is Tanimoto similarity over the native 167-bit structural-key fingerprint, not MACCS keys",
    "path_fts is Tanimoto similarity over the native 1024-bit path fingerprint, not the RDKit topological fingerprint",
    "failed questions and unparseable predictions score zero on every metric",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub kmse_report: u32,
    pub search: SearchConfig,
    pub model: String,
    pub checkpoint_id: String,
    pub kb_id: String,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub header: ReportHeader,
    pub rows: Vec<MetricRow>,
    pub aggregates: Aggregates,
}

impl MetricReport {
    pub fn new(header: ReportHeader, rows: Vec<MetricRow>) -> MetricReport {
        let aggregates = aggregate(&rows);
        MetricReport { header, rows, aggregates }
    }

    /// Whether the stored aggregates equal a fresh aggregation of the rows.
    pub fn is_consistent(&self) -> bool {
        aggregate(&self.rows) == self.aggregates
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(self).expect("report serializes"))?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MetricReport, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Format(format!("{}: {e}", path.display())))
    }
}

/// A dataset entry: the question, or the reason its file was rejected.
pub type DatasetEntry = (String, Result<ElucidationQuestion, String>);

/// Question files (`*.json`) of `dir` in file-name order. Entries that fail
/// to load are kept, keyed by file stem, so they can be reported.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<DatasetEntry>, HarnessError> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(HarnessError::EmptyDataset(dir.to_path_buf()));
    }
    let mut seen = BTreeSet::new();
    let mut entries = Vec::new();
    for file in files {
        let stem = file.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let entry = match ElucidationQuestion::load(&file) {
            Ok(q) => (q.id.clone(), Ok(q)),
            Err(e) => (stem, Err(e.to_string())),
        };
        if !seen.insert(entry.0.clone()) {
            return Err(HarnessError::DuplicateQuestion(entry.0));
        }
        entries.push(entry);
    }
    Ok(entries)
}

fn trace_file(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{}.json", id.replace(['/', '\\'], "_")))
}

fn failed_row(id: &str, target: Option<String>, error: String, tokens: u64, start: Instant) -> MetricRow {
    MetricRow {
        id: id.to_string(),
        predicted: None,
        target,
        reward: None,
        metrics: Metrics::default(),
        tokens,
        wall_ms: start.elapsed().as_millis() as u64,
        error: Some(error),
    }
}

fn save_trace(cfg: &BenchConfig, trace: &Trace) {
    if let Some(dir) = &cfg.traces {
        if let Err(e) = trace.save(trace_file(dir, &trace.question_id)) {
            log::error!("{}: could not write trace: {e}", trace.question_id);
        }
    }
}

fn run_one(entry: &DatasetEntry, engine: &Engine, clients: &dyn SessionClients, cfg: &BenchConfig) -> MetricRow {
    let start = Instant::now();
    let (id, question) = entry;
    let q = match question {
        Ok(q) => q,
        Err(e) => return failed_row(id, None, e.clone(), 0, start),
    };
    let Some(target) = q.target_smiles.clone() else {
        return failed_row(id, None, "question has no target SMILES".into(), 0, start);
    };
    let client = match clients.session(id) {
        Ok(c) => c,
        Err(e) => return failed_row(id, Some(target), e.to_string(), 0, start),
    };
    match engine.run(q, client.as_ref(), &cfg.search) {
        Ok(out) => {
            save_trace(cfg, &out.trace);
            let tokens = out.trace.total_tokens();
            match compute_metrics(out.smiles.as_deref(), &target) {
                Ok(metrics) => MetricRow {
                    id: id.clone(),
                    predicted: out.smiles,
                    target: Some(target),
                    reward: Some(out.reward),
                    metrics,
                    tokens,
                    wall_ms: start.elapsed().as_millis() as u64,
                    error: None,
                },
                Err(e) => failed_row(id, Some(target), e.to_string(), tokens, start),
            }
        }
        Err(e) => {
            log::error!("{id}: {e}");
            let tokens = e.partial_trace().map_or(0, |t| {
                save_trace(cfg, t);
                t.total_tokens()
            });
            failed_row(id, Some(target), e.to_string(), tokens, start)
        }
    }
}

/// Runs every unfinished question of `dataset`, persisting the report after
/// each one. Rows of an existing report at `cfg.report` that completed
/// without error are kept; failed or missing questions are rerun.
pub fn run_benchmark(
    dataset: impl AsRef<Path>,
    engine: &Engine,
    clients: &dyn SessionClients,
    cfg: &BenchConfig,
) -> Result<MetricReport, HarnessError> {
    cfg.search.validate()?;
    let entries = load_dataset(dataset)?;
    let header = ReportHeader {
        kmse_report: 1,
        search: cfg.search.clone(),
        model: engine.params.model.clone(),
        checkpoint_id: engine.ckpt.id().to_string(),
        kb_id: engine.kb.content_id(),
        notes: REPORT_NOTES.iter().map(|s| s.to_string()).collect(),
    };
    let mut done: BTreeMap<String, MetricRow> = BTreeMap::new();
    if let Some(path) = cfg.report.as_ref().filter(|p| p.exists()) {
        let previous = MetricReport::load(path)?;
        if previous.header != header {
            return Err(HarnessError::ReportMismatch(format!(
                "{} was produced with a different configuration, checkpoint, or knowledge base",
                path.display()
            )));
        }
        done.extend(previous.rows.into_iter().filter(|r| r.error.is_none()).map(|r| (r.id.clone(), r)));
    }
    if let Some(dir) = &cfg.traces {
        std::fs::create_dir_all(dir)?;
    }
    let pending: Vec<&DatasetEntry> = entries.iter().filter(|(id, _)| !done.contains_key(id)).collect();
    log::info!("{} questions, {} already complete", entries.len(), entries.len() - pending.len());

    let order: Vec<&str> = entries.iter().map(|(id, _)| id.as_str()).collect();
    let assemble = |rows: &BTreeMap<String, MetricRow>| {
        MetricReport::new(header.clone(), order.iter().filter_map(|id| rows.get(*id).cloned()).collect())
    };
    let state = Mutex::new((done, None::<HarnessError>));
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..cfg.concurrency.max(1).min(pending.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(entry) = pending.get(i) else { break };
                let row = run_one(entry, engine, clients, cfg);
                let mut guard = state.lock().unwrap();
                guard.0.insert(row.id.clone(), row);
                if let Some(path) = &cfg.report {
                    if let Err(e) = assemble(&guard.0).save(path) {
                        guard.1.get_or_insert(e);
                    }
                }
            });
        }
    });
    let (rows, error) = state.into_inner().unwrap();
    if let Some(e) = error {
        return Err(e);
    }
    Ok(assemble(&rows))
}

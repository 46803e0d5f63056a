mod common;

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use kmse::harness::{
    aggregate, compute_metrics, run_benchmark, BenchConfig, HarnessError, MetricReport, SessionClients,
};
use kmse::kb::{build_kb, KnowledgeBase, MockDescriber};
use kmse::llm::{ChatClient, ChatParams, LlmError, MockBook, MockScript, TemplateId};
use kmse::scorer::ScorerCheckpoint;
use kmse::search::{Engine, SearchConfig, Trace};

const TARGETS: [(&str, &str); 3] = [("q1", "CCO"), ("q2", "CC(=O)C"), ("q3", "c1ccsc1")];

/// Predictions each scripted session settles on.
const PREDICTIONS: [(&str, Option<&str>); 3] = [("q1", Some("OCC")), ("q2", Some("CCC=O")), ("q3", Some("C1CCCCC1"))];

fn book() -> MockBook {
    let script = |root: &str, rewrite: &str| {
        MockScript::new()
            .with(TemplateId::Init, &[root])
            .with(TemplateId::Critique, &["Check the carbon count."])
            .with(TemplateId::Rewrite, &[rewrite])
    };
    let mut book = MockBook::default();
    book.questions.insert("q1".into(), script("<answer>OCC</answer>", "<answer>CCO</answer>"));
    book.questions.insert("q2".into(), script("<answer>CCC=O</answer>", "I cannot decide."));
    book.questions.insert("q3".into(), script("<answer>C1CCCCC1</answer>", "<answer>C1CCCCC1</answer>"));
    book
}

fn write_dataset(dir: &Path) {
    for (id, smiles) in TARGETS {
        let q = common::question(id, smiles);
        std::fs::write(dir.join(format!("{id}.json")), serde_json::to_string(&q).unwrap()).unwrap();
    }
}

struct Fixture {
    kb: KnowledgeBase,
    ckpt: ScorerCheckpoint,
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("questions")).unwrap();
        write_dataset(&dir.path().join("questions"));
        let kb = build_kb(common::CORPUS.lines().take(40), 3, &MockDescriber).unwrap();
        Fixture { kb, ckpt: common::tiny_checkpoint(), dir }
    }

    fn engine(&self) -> Engine<'_> {
        Engine { kb: &self.kb, ckpt: &self.ckpt, params: ChatParams::default(), images: None }
    }

    fn config(&self, concurrency: usize) -> BenchConfig {
        BenchConfig {
            search: SearchConfig { iterations: 3, ..Default::default() },
            concurrency,
            report: Some(self.dir.path().join("report.json")),
            traces: Some(self.dir.path().join("traces")),
        }
    }

    fn run(&self, clients: &dyn SessionClients, concurrency: usize) -> Result<MetricReport, HarnessError> {
        run_benchmark(self.dir.path().join("questions"), &self.engine(), clients, &self.config(concurrency))
    }
}

/// Counts sessions handed out.
struct Counting {
    book: MockBook,
    sessions: AtomicUsize,
}

impl SessionClients for Counting {
    fn session(&self, id: &str) -> Result<Box<dyn ChatClient + '_>, LlmError> {
        self.sessions.fetch_add(1, Ordering::SeqCst);
        Ok(Box::new(self.book.session(id)?))
    }
}

#[test]
fn three_question_report_matches_hand_means() {
    let fx = Fixture::new();
    let report = fx.run(&book(), 1).unwrap();
    assert_eq!(report.rows.len(), 3);
    for (row, (id, pred)) in report.rows.iter().zip(PREDICTIONS) {
        assert_eq!(row.id, id);
        assert_eq!(row.predicted.as_deref(), pred);
        assert!(row.error.is_none());
    }
    let a = &report.aggregates;
    assert_eq!(a.exact_acc, 1.0 / 3.0);
    assert_eq!(a.formula_acc, 2.0 / 3.0);
    let morgan: Vec<f64> =
        PREDICTIONS.iter().zip(TARGETS).map(|((_, p), (_, t))| compute_metrics(*p, t).unwrap().morgan_fts).collect();
    assert_eq!(morgan[0], 1.0);
    assert_eq!(a.morgan_fts, (morgan[0] + morgan[1] + morgan[2]) / 3.0);
    assert!(report.is_consistent());
    assert_eq!(report.header.notes.len(), 3);

    let on_disk = MetricReport::load(fx.dir.path().join("report.json")).unwrap();
    assert_eq!(on_disk, report);
    let traced: u64 = TARGETS
        .iter()
        .map(|(id, _)| Trace::load(fx.dir.path().join("traces").join(format!("{id}.json"))).unwrap().total_tokens())
        .sum();
    assert_eq!(a.tokens_total, traced);
    assert!(traced > 0);
}

#[test]
fn failures_become_zero_rows() {
    let fx = Fixture::new();
    std::fs::write(fx.dir.path().join("questions/q4.json"), "{not json").unwrap();
    let mut partial = book();
    partial.questions.remove("q3");
    let report = fx.run(&partial, 1).unwrap();
    assert_eq!(report.rows.len(), 4);
    let errors: Vec<&str> = report.rows.iter().filter(|r| r.error.is_some()).map(|r| r.id.as_str()).collect();
    assert_eq!(errors, vec!["q3", "q4"]);
    assert_eq!(report.rows[2].metrics, Default::default());
    assert_eq!(report.aggregates.failures, 2);
    assert_eq!(report.aggregates.exact_acc, 0.25);
    assert_eq!(report.aggregates, aggregate(&report.rows));
}

#[test]
fn rerun_resumes_unfinished_questions_only() {
    let fx = Fixture::new();
    let mut partial = book();
    partial.questions.remove("q2");
    let first = Counting { book: partial, sessions: AtomicUsize::new(0) };
    let report = fx.run(&first, 1).unwrap();
    assert_eq!(report.aggregates.failures, 1);
    assert_eq!(first.sessions.load(Ordering::SeqCst), 3);

    let second = Counting { book: book(), sessions: AtomicUsize::new(0) };
    let resumed = fx.run(&second, 1).unwrap();
    assert_eq!(second.sessions.load(Ordering::SeqCst), 1);
    assert_eq!(resumed.aggregates.failures, 0);
    assert_eq!(resumed.rows[0], report.rows[0]);

    let third = Counting { book: book(), sessions: AtomicUsize::new(0) };
    fx.run(&third, 1).unwrap();
    assert_eq!(third.sessions.load(Ordering::SeqCst), 0);

    let mut other = fx.config(1);
    other.search.top_k = 2;
    let err = run_benchmark(fx.dir.path().join("questions"), &fx.engine(), &book(), &other).unwrap_err();
    assert!(matches!(err, HarnessError::ReportMismatch(_)));
}

#[test]
fn concurrency_does_not_change_results() {
    let strip = |mut r: MetricReport| {
        r.rows.iter_mut().for_each(|row| row.wall_ms = 0);
        r.rows
    };
    let serial = Fixture::new();
    let parallel = Fixture::new();
    assert_eq!(strip(serial.run(&book(), 1).unwrap()), strip(parallel.run(&book(), 3).unwrap()));
}

#[test]
fn empty_dataset_is_an_error() {
    let fx = Fixture::new();
    let empty = fx.dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let err = run_benchmark(&empty, &fx.engine(), &book(), &BenchConfig::default()).unwrap_err();
    assert!(matches!(err, HarnessError::EmptyDataset(_)));
}

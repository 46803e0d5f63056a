//! Tree search over LLM answers: retrieval, UCT selection, critique and
//! rewrite expansion, scorer rewards, and Q backpropagation.

mod descriptor;
mod tree;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::{canonical_smiles, molecular_formula, parse_formula, parse_smiles, Molecule};
use crate::kb::{retrieve_topk, KbError, KnowledgeBase};
use crate::llm::{
    extract_smiles, render, Binding, Bindings, CallContext, ChatClient, ChatMessage, ChatParams, LlmError, TemplateId,
    DEFAULT_CHAR_BUDGET,
};
use crate::scorer::{ScorerCheckpoint, ScorerError};
use crate::spectra::{parse_spectrum, tokenize, SpectraError, SpectrumTokens};

pub use descriptor::{structure_descriptor, ImageDir, StructureImages};
pub use tree::{SearchNode, SearchTree};

/// Reward of a node whose answer holds no parseable SMILES.
pub const PARSE_FAILURE_REWARD: f64 = -1.0;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("invalid question: {0}")]
    InvalidQuestion(String),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error("llm call failed: {source}")]
    Llm { source: LlmError, trace: Box<Trace> },
    #[error("no parseable answer at the root after a retry")]
    NoAnswerFound { trace: Box<Trace> },
    #[error("every node has the maximum number of children")]
    TreeSaturated,
    #[error("trace replay mismatch: {0}")]
    Replay(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SearchError {
    /// Trace recorded up to the failure, for errors raised mid-session.
    pub fn partial_trace(&self) -> Option<&Trace> {
        match self {
            SearchError::Llm { trace, .. } | SearchError::NoAnswerFound { trace } => Some(trace),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub iterations: usize,
    pub c: f64,
    pub epsilon: f64,
    pub max_children: usize,
    pub top_k: usize,
    pub char_budget: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            iterations: 8,
            c: 1.0,
            epsilon: 0.1,
            max_children: 2,
            top_k: 1,
            char_budget: DEFAULT_CHAR_BUDGET,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidConfig(m.into()));
        if self.max_children < 1 {
            return bad("max_children must be at least 1");
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad("c must be positive");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        Ok(())
    }
}

/// One elucidation task. The target is used for evaluation only and never
/// reaches a prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElucidationQuestion {
    pub id: String,
    pub formula: String,
    pub cnmr: String,
    pub hnmr: String,
    #[serde(default)]
    pub ir_image: Option<PathBuf>,
    #[serde(default)]
    pub target_smiles: Option<String>,
}

impl ElucidationQuestion {
    /// Reads a question file; a relative `ir_image` resolves against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<ElucidationQuestion, SearchError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut q: ElucidationQuestion = serde_json::from_str(&text)
            .map_err(|e| SearchError::InvalidQuestion(format!("{}: {e}", path.display())))?;
        if let (Some(img), Some(dir)) = (&q.ir_image, path.parent()) {
            if img.is_relative() {
                q.ir_image = Some(dir.join(img));
            }
        }
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        parse_formula(&self.formula).map_err(|e| SearchError::InvalidQuestion(format!("formula: {e}")))?;
        if let Some(t) = &self.target_smiles {
            parse_smiles(t).map_err(|e| SearchError::InvalidQuestion(format!("target: {e}")))?;
        }
        Ok(())
    }

    pub fn tokens(&self) -> Result<SpectrumTokens, SearchError> {
        Ok(tokenize(&parse_spectrum(&self.cnmr, &self.hnmr)?))
    }

    /// Problem statement shared by the critique and rewrite prompts.
    pub fn problem_text(&self) -> String {
        let mut text = format!("Molecular formula: {}\n13C NMR: {}\n1H NMR: {}", self.formula, self.cnmr, self.hnmr);
        if self.ir_image.is_some() {
            text.push_str("\nIR spectrum: attached image");
        }
        text
    }

    fn ir_attachment(&self) -> Result<Option<(String, Vec<u8>)>, SearchError> {
        let Some(path) = &self.ir_image else { return Ok(None) };
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        let media = match ext.as_str() {
            "png" => "image/png",
            "jpg" | "jpeg" => "image/jpeg",
            "gif" => "image/gif",
            "webp" => "image/webp",
            _ => return Err(SearchError::InvalidQuestion(format!("unsupported IR image type: {}", path.display()))),
        };
        Ok(Some((media.to_string(), std::fs::read(path)?)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedRecord {
    pub smiles: String,
    pub description: String,
    pub similarity: f64,
}

/// Usage of one LLM call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub template: TemplateId,
    /// Node the call expanded from; absent for root calls.
    pub node: Option<usize>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
    pub retries: u32,
    /// Descriptions shortened to fit the character budget.
    pub truncated: usize,
}

/// Everything needed to audit a session and replay its selection arithmetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub question_id: String,
    pub config: SearchConfig,
    pub model: String,
    pub checkpoint_id: String,
    pub retrieved: Vec<RetrievedRecord>,
    pub nodes: Vec<SearchNode>,
    /// Node selected for expansion in each completed iteration.
    pub selections: Vec<usize>,
    pub calls: Vec<CallRecord>,
    pub best: Option<usize>,
}

impl Trace {
    pub fn total_tokens(&self) -> u64 {
        self.calls.iter().map(|c| c.prompt_tokens + c.completion_tokens).sum()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SearchError> {
        let json = serde_json::to_string_pretty(self).expect("trace serializes");
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Trace, SearchError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| SearchError::Replay(format!("unreadable trace: {e}")))
    }
}

/// Rebuilds the tree from recorded rewards alone and checks every selection,
/// Q value, visit count, and the final answer against the trace.
pub fn replay_trace(trace: &Trace) -> Result<SearchTree, SearchError> {
    let mismatch = |m: String| Err(SearchError::Replay(m));
    let Some(root) = trace.nodes.first() else { return mismatch("trace has no nodes".into()) };
    if trace.selections.len() + 1 != trace.nodes.len() {
        return mismatch(format!("{} nodes for {} selections", trace.nodes.len(), trace.selections.len()));
    }
    let mut tree = SearchTree::new(root.answer.clone(), root.smiles.clone(), root.reward);
    for (node, &selected) in trace.nodes[1..].iter().zip(&trace.selections) {
        let chosen = tree.select_uct(&trace.config)?;
        if chosen != selected || node.parent != Some(chosen) {
            return mismatch(format!("node {}: replay selects {chosen}, trace has {selected}", node.id));
        }
        let id = tree.add_child(
            chosen,
            node.answer.clone(),
            node.smiles.clone(),
            node.reward,
            node.critique.clone().unwrap_or_default(),
        );
        tree.backpropagate(id);
    }
    for (got, want) in tree.nodes().iter().zip(&trace.nodes) {
        if got.q.to_bits() != want.q.to_bits() || got.visits != want.visits || got.children != want.children {
            return mismatch(format!(
                "node {}: replay Q={} N={}, trace Q={} N={}",
                got.id, got.q, got.visits, want.q, want.visits
            ));
        }
    }
    if trace.best != Some(tree.best()) {
        return mismatch(format!("best node {:?}, replay {}", trace.best, tree.best()));
    }
    Ok(tree)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Elucidation {
    pub smiles: Option<String>,
    pub reward: f64,
    pub node: usize,
    pub trace: Trace,
}

/// Shared read-only resources for elucidation sessions.
pub struct Engine<'a> {
    pub kb: &'a KnowledgeBase,
    pub ckpt: &'a ScorerCheckpoint,
    pub params: ChatParams,
    pub images: Option<&'a dyn StructureImages>,
}

struct Session<'e, 'a> {
    engine: &'e Engine<'a>,
    llm: &'e dyn ChatClient,
    question: &'e ElucidationQuestion,
    cfg: &'e SearchConfig,
    tokens: SpectrumTokens,
    ir: Option<(String, Vec<u8>)>,
    trace: Trace,
}

impl Session<'_, '_> {
    fn call(
        &mut self,
        template: TemplateId,
        node: Option<usize>,
        bindings: &Bindings,
        image: Option<&(String, Vec<u8>)>,
    ) -> Result<String, SearchError> {
        let rendered = match render(template, bindings, self.cfg.char_budget) {
            Ok(r) => r,
            Err(source) => return Err(self.llm_error(source)),
        };
        if rendered.truncated > 0 {
            log::warn!("{}: {} prompt values truncated to fit the budget", self.question.id, rendered.truncated);
        }
        let mut msg = ChatMessage::user(rendered.text);
        for (media, bytes) in self.ir.iter().chain(image) {
            msg = msg.with_image(media.clone(), bytes);
        }
        match self.llm.chat(&[msg], &self.engine.params, CallContext { template }) {
            Ok(r) => {
                self.trace.calls.push(CallRecord {
                    template,
                    node,
                    prompt_tokens: r.prompt_tokens.unwrap_or(0),
                    completion_tokens: r.completion_tokens.unwrap_or(0),
                    latency_ms: r.latency_ms,
                    retries: r.retries,
                    truncated: rendered.truncated,
                });
                Ok(r.text)
            }
            Err(source) => Err(self.llm_error(source)),
        }
    }

    fn llm_error(&self, source: LlmError) -> SearchError {
        SearchError::Llm { source, trace: Box::new(self.trace.clone()) }
    }

    /// Extracted SMILES and reward of an answer; parse failures and scoring
    /// failures take the penalty.
    fn evaluate(&self, answer: &str) -> (Option<String>, f64) {
        let Ok(smiles) = extract_smiles(answer) else { return (None, PARSE_FAILURE_REWARD) };
        let Ok(mol) = parse_smiles(&smiles) else { return (None, PARSE_FAILURE_REWARD) };
        match self.engine.ckpt.score(&mol, &self.tokens) {
            Ok(r) if r.is_finite() => (Some(smiles), r),
            Ok(_) | Err(_) => {
                log::warn!("{}: scoring {smiles} failed; using the penalty reward", self.question.id);
                (Some(smiles), PARSE_FAILURE_REWARD)
            }
        }
    }

    fn root(&mut self) -> Result<SearchTree, SearchError> {
        let records = self.trace.retrieved.iter().map(|r| (r.smiles.clone(), r.description.clone())).collect();
        let mut b = Bindings::new();
        b.insert("formula", Binding::Text(self.question.formula.clone()));
        b.insert("cnmr", Binding::Text(self.question.cnmr.clone()));
        b.insert("hnmr", Binding::Text(self.question.hnmr.clone()));
        b.insert("substructures", Binding::Records(records));
        for attempt in 0..2 {
            let answer = self.call(TemplateId::Init, None, &b, None)?;
            if extract_smiles(&answer).is_ok() {
                let (smiles, reward) = self.evaluate(&answer);
                return Ok(SearchTree::new(answer, smiles, reward));
            }
            log::warn!("{}: init answer {attempt} has no parseable SMILES", self.question.id);
        }
        Err(SearchError::NoAnswerFound { trace: Box::new(self.trace.clone()) })
    }

    fn expand(&mut self, tree: &mut SearchTree, parent: usize) -> Result<usize, SearchError> {
        let node = tree.node(parent).clone();
        let mol: Option<Molecule> = node.smiles.as_deref().and_then(|s| parse_smiles(s).ok());
        let (formula, descriptor) = match &mol {
            Some(m) => (molecular_formula(m).to_string(), structure_descriptor(m)),
            None => {
                ("unknown".to_string(), "The proposed answer does not contain a parseable SMILES string.".to_string())
            }
        };
        let image = match (self.engine.images, &mol) {
            (Some(images), Some(m)) => images.image(&canonical_smiles(m)),
            _ => None,
        };
        let mut b = Bindings::new();
        b.insert("question", Binding::Text(self.question.problem_text()));
        b.insert("answer", Binding::Text(node.answer.clone()));
        b.insert("formula", Binding::Text(formula));
        b.insert("descriptor", Binding::Text(descriptor));
        let critique = self.call(TemplateId::Critique, Some(parent), &b, image.as_ref())?;
        let mut b = Bindings::new();
        b.insert("question", Binding::Text(self.question.problem_text()));
        b.insert("answer", Binding::Text(node.answer));
        b.insert("critique", Binding::Text(critique.clone()));
        let rewrite = self.call(TemplateId::Rewrite, Some(parent), &b, None)?;
        let (smiles, reward) = self.evaluate(&rewrite);
        Ok(tree.add_child(parent, rewrite, smiles, reward, critique))
    }
}

impl Engine<'_> {
    /// Runs one session: retrieval, root answer, then the configured number
    /// of select/expand/evaluate/backpropagate rounds. Returns the node with
    /// the highest reward.
    pub fn run(
        &self,
        question: &ElucidationQuestion,
        llm: &dyn ChatClient,
        cfg: &SearchConfig,
    ) -> Result<Elucidation, SearchError> {
        cfg.validate()?;
        question.validate()?;
        let tokens = question.tokens()?;
        let retrieved = retrieve_topk(self.kb, &tokens, cfg.top_k, self.ckpt)?
            .into_iter()
            .map(|(r, similarity)| RetrievedRecord {
                smiles: r.smiles.clone(),
                description: r.description.clone(),
                similarity,
            })
            .collect();
        let mut session = Session {
            engine: self,
            llm,
            question,
            cfg,
            tokens,
            ir: question.ir_attachment()?,
            trace: Trace {
                question_id: question.id.clone(),
                config: cfg.clone(),
                model: self.params.model.clone(),
                checkpoint_id: self.ckpt.id().to_string(),
                retrieved,
                nodes: Vec::new(),
                selections: Vec::new(),
                calls: Vec::new(),
                best: None,
            },
        };
        let mut tree = session.root()?;
        session.trace.nodes = tree.nodes().to_vec();
        for _ in 0..cfg.iterations {
            let Ok(selected) = tree.select_uct(cfg) else { break };
            let id = session.expand(&mut tree, selected)?;
            tree.backpropagate(id);
            session.trace.selections.push(selected);
            session.trace.nodes = tree.nodes().to_vec();
        }
        let best = tree.best();
        session.trace.best = Some(best);
        let node = tree.node(best);
        Ok(Elucidation { smiles: node.smiles.clone(), reward: node.reward, node: best, trace: session.trace })
    }
}

/// One session without an image hook.
pub fn run_elucidation(
    question: &ElucidationQuestion,
    kb: &KnowledgeBase,
    ckpt: &ScorerCheckpoint,
    llm: &dyn ChatClient,
    params: &ChatParams,
    cfg: &SearchConfig,
) -> Result<Elucidation, SearchError> {
    Engine { kb, ckpt, params: params.clone(), images: None }.run(question, llm, cfg)
}

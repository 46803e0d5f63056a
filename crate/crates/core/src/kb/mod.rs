//! Substructure knowledge base: extraction, frequency filtering, descriptions,
//! persistence, and scorer-based retrieval.

mod describe;
mod extract;

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chem::{canonicalize_smiles, parse_smiles};
use crate::scorer::{EmbeddingVec, ScorerCheckpoint, ScorerError};
use crate::spectra::SpectrumTokens;

pub use describe::{
    functional_group_rules, functional_groups, parse_group_table, structure_facts, Describer, FunctionalGroupRule,
    LlmDescriber, MockDescriber, RingFact, StructureFacts,
};
pub use extract::{extract_chain_substructures, extract_ring_substructures, substructure_set};

/// Desk-scale frequency threshold; full-scale corpora use 1000.
pub const DEFAULT_MIN_COUNT: usize = 5;
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("no corpus molecule could be parsed ({0} lines)")]
    CorpusParseError(usize),
    #[error("frequency threshold must be at least 1")]
    InvalidThreshold,
    #[error("describer failed for {smiles}: {message}")]
    DescriberError { smiles: String, message: String },
    #[error("embeddings were computed with checkpoint {found}, not {expected}")]
    CheckpointMismatch { expected: String, found: String },
    #[error("kb file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstructureRecord {
    pub smiles: String,
    pub description: String,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbMeta {
    pub kmse_kb: u32,
    /// Hash of the sorted corpus lines.
    pub corpus_id: String,
    pub molecules: usize,
    pub min_count: usize,
    pub checkpoint_id: Option<String>,
}

/// Records ordered by descending count, then SMILES.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    pub meta: KbMeta,
    pub records: Vec<SubstructureRecord>,
}

fn corpus_entries<'a>(corpus: impl IntoIterator<Item = &'a str>) -> Vec<&'a str> {
    corpus.into_iter().filter_map(|l| l.split_whitespace().next()).filter(|s| !s.starts_with('#')).collect()
}

/// Number of corpus molecules containing each canonical substructure, and
/// the number of molecules parsed. Unparseable lines are skipped.
pub fn count_substructures<'a>(
    corpus: impl IntoIterator<Item = &'a str>,
) -> Result<(HashMap<String, usize>, usize), KbError> {
    let entries = corpus_entries(corpus);
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut parsed = 0;
    for smiles in &entries {
        match parse_smiles(smiles) {
            Ok(mol) => {
                parsed += 1;
                for key in substructure_set(&mol) {
                    *counts.entry(key).or_insert(0) += 1;
                }
            }
            Err(e) => log::warn!("skipping corpus entry {smiles}: {e}"),
        }
    }
    if parsed == 0 {
        return Err(KbError::CorpusParseError(entries.len()));
    }
    Ok((counts, parsed))
}

pub fn build_kb<'a>(
    corpus: impl IntoIterator<Item = &'a str>,
    min_count: usize,
    describer: &dyn Describer,
) -> Result<KnowledgeBase, KbError> {
    if min_count == 0 {
        return Err(KbError::InvalidThreshold);
    }
    let entries = corpus_entries(corpus);
    let (counts, parsed) = count_substructures(entries.iter().copied())?;
    let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut records = Vec::with_capacity(kept.len());
    for (smiles, count) in kept {
        let mol = parse_smiles(&smiles).map_err(|e| KbError::DescriberError {
            smiles: smiles.clone(),
            message: format!("substructure does not reparse: {e}"),
        })?;
        let facts = structure_facts(&mol);
        let description = describer
            .describe(&smiles, &facts)
            .map_err(|message| KbError::DescriberError { smiles: smiles.clone(), message })?;
        records.push(SubstructureRecord { smiles, description, count, embedding: None, checkpoint_id: None });
    }
    let mut sorted = entries.clone();
    sorted.sort_unstable();
    let mut h = Sha256::new();
    for s in sorted {
        h.update(s.as_bytes());
        h.update(b"\n");
    }
    let meta = KbMeta {
        kmse_kb: FORMAT_VERSION,
        corpus_id: hex::encode(h.finalize()),
        molecules: parsed,
        min_count,
        checkpoint_id: None,
    };
    Ok(KnowledgeBase { meta, records })
}

/// Stored embeddings are unit-normalized `f32`; cosine is unaffected.
fn unit_f32(e: &EmbeddingVec) -> Vec<f32> {
    let n = e.norm();
    let scale = if n > 0.0 { 1.0 / n } else { 0.0 };
    e.0.iter().map(|&x| (x * scale) as f32).collect()
}

impl KnowledgeBase {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Id of this KB content (header plus records without embeddings).
    pub fn content_id(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.meta.corpus_id.as_bytes());
        for r in &self.records {
            h.update(serde_json::to_vec(&(&r.smiles, &r.description, r.count)).expect("record serializes"));
        }
        hex::encode(h.finalize())
    }

    /// Encodes every record under `ckpt`, replacing any cached vectors.
    pub fn embed(&mut self, ckpt: &ScorerCheckpoint) -> Result<(), KbError> {
        let mols = self
            .records
            .iter()
            .map(|r| {
                parse_smiles(&r.smiles)
                    .map_err(|e| KbError::Format { line: 0, message: format!("record {}: {e}", r.smiles) })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let embeddings = if mols.is_empty() { Vec::new() } else { ckpt.encode_molecules(&mols)? };
        for (r, e) in self.records.iter_mut().zip(embeddings) {
            r.embedding = Some(unit_f32(&e));
            r.checkpoint_id = Some(ckpt.id().to_string());
        }
        self.meta.checkpoint_id = Some(ckpt.id().to_string());
        Ok(())
    }

    /// Record embeddings under `ckpt`: cached vectors are used when present,
    /// missing ones are computed; vectors cached under another checkpoint are
    /// an error.
    pub fn embeddings(&self, ckpt: &ScorerCheckpoint) -> Result<Vec<EmbeddingVec>, KbError> {
        let mut out = Vec::with_capacity(self.records.len());
        for r in &self.records {
            match (&r.embedding, &r.checkpoint_id) {
                (Some(e), Some(id)) if id == ckpt.id() => out.push(EmbeddingVec(e.iter().map(|&x| x as f64).collect())),
                (Some(_), found) => {
                    return Err(KbError::CheckpointMismatch {
                        expected: ckpt.id().to_string(),
                        found: found.clone().unwrap_or_else(|| "unknown".into()),
                    })
                }
                (None, _) => {
                    let mol = parse_smiles(&r.smiles)
                        .map_err(|e| KbError::Format { line: 0, message: format!("record {}: {e}", r.smiles) })?;
                    let e = ckpt.encode_molecule(&mol)?;
                    out.push(EmbeddingVec(unit_f32(&e).into_iter().map(f64::from).collect()));
                }
            }
        }
        Ok(out)
    }

    fn validate(&self) -> Result<(), KbError> {
        let mut seen = BTreeSet::new();
        for (i, r) in self.records.iter().enumerate() {
            let line = i + 2;
            let bad = |message: String| KbError::Format { line, message };
            let canonical = canonicalize_smiles(&r.smiles).map_err(|e| bad(format!("{}: {e}", r.smiles)))?;
            if canonical != r.smiles {
                return Err(bad(format!("{} is not canonical (expected {canonical})", r.smiles)));
            }
            if !seen.insert(&r.smiles) {
                return Err(bad(format!("duplicate record {}", r.smiles)));
            }
            if r.count < self.meta.min_count {
                return Err(bad(format!("count {} below threshold {}", r.count, self.meta.min_count)));
            }
            if i > 0 {
                let p = &self.records[i - 1];
                if !(p.count > r.count || (p.count == r.count && p.smiles < r.smiles)) {
                    return Err(bad("records out of order".into()));
                }
            }
        }
        Ok(())
    }
}

pub fn save_kb(kb: &KnowledgeBase, path: impl AsRef<Path>) -> Result<(), KbError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer(&mut w, &kb.meta).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    for r in &kb.records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_kb(path: impl AsRef<Path>) -> Result<KnowledgeBase, KbError> {
    parse_kb(&fs::read_to_string(path)?)
}

pub fn parse_kb(text: &str) -> Result<KnowledgeBase, KbError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(KbError::Format { line: 1, message: "missing header".into() })?;
    let meta: KbMeta =
        serde_json::from_str(header).map_err(|e| KbError::Format { line: 1, message: format!("header: {e}") })?;
    if meta.kmse_kb != FORMAT_VERSION {
        return Err(KbError::Format { line: 1, message: format!("unsupported version {}", meta.kmse_kb) });
    }
    let records = lines
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| KbError::Format { line: i + 1, message: e.to_string() }))
        .collect::<Result<Vec<SubstructureRecord>, _>>()?;
    let kb = KnowledgeBase { meta, records };
    kb.validate()?;
    Ok(kb)
}

/// The `k` records most similar to `query`, by descending cosine with ties
/// kept in record order.
pub fn top_k_by_embedding<'a>(
    records: &'a [SubstructureRecord],
    embeddings: &[EmbeddingVec],
    query: &EmbeddingVec,
    k: usize,
) -> Vec<(&'a SubstructureRecord, f64)> {
    let mut scored: Vec<(usize, f64)> = embeddings.iter().map(|e| e.cosine(query)).enumerate().collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().take(k).map(|(i, s)| (&records[i], s)).collect()
}

/// Retrieval against a spectrum: records maximizing the cosine between their
/// molecule embedding and the spectrum embedding. `k = 0` disables retrieval.
pub fn retrieve_topk<'a>(
    kb: &'a KnowledgeBase,
    spectrum: &SpectrumTokens,
    k: usize,
    ckpt: &ScorerCheckpoint,
) -> Result<Vec<(&'a SubstructureRecord, f64)>, KbError> {
    if k == 0 || kb.is_empty() {
        return Ok(Vec::new());
    }
    let embeddings = kb.embeddings(ckpt)?;
    let query = ckpt.encode_spectrum(spectrum)?;
    Ok(top_k_by_embedding(&kb.records, &embeddings, &query, k))
}

//! Structure facts of a substructure and description providers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use serde::Serialize;

use crate::chem::rings::sssr;
use crate::chem::{molecular_formula, ChemError, Molecule, Pattern};
use crate::llm::{
    render, Binding, Bindings, CallContext, ChatClient, ChatMessage, ChatParams, LlmError, TemplateId,
    DEFAULT_CHAR_BUDGET,
};

const FUNCTIONAL_GROUPS_TSV: &str = include_str!("../../data/functional_groups.tsv");
const TABLE_HEADER: &str = "# kmse functional groups v1";

#[derive(Debug, Clone)]
pub struct FunctionalGroupRule {
    pub name: String,
    pub pattern: Pattern,
    pub unless: Vec<Pattern>,
}

impl FunctionalGroupRule {
    pub fn hits(&self, mol: &Molecule) -> bool {
        let anchors = self.pattern.anchor_atoms(mol);
        if anchors.is_empty() {
            return false;
        }
        let mut excluded = std::collections::BTreeSet::new();
        for p in &self.unless {
            excluded.extend(p.anchor_atoms(mol));
        }
        anchors.iter().any(|a| !excluded.contains(a))
    }
}

/// Parses a functional-group table: tab-separated `name pattern unless...`
/// rows after a version header; `#` lines are comments.
pub fn parse_group_table(text: &str) -> Result<Vec<FunctionalGroupRule>, ChemError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim() == TABLE_HEADER => {}
        _ => return Err(ChemError::PatternTable { line: 1, message: format!("expected header {TABLE_HEADER:?}") }),
    }
    let mut rules = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(name), Some(pattern)) = (fields.next(), fields.next()) else {
            return Err(ChemError::PatternTable { line: i + 1, message: "expected name and pattern".into() });
        };
        let wrap = |e: ChemError| ChemError::PatternTable { line: i + 1, message: e.to_string() };
        rules.push(FunctionalGroupRule {
            name: name.trim().to_string(),
            pattern: Pattern::parse(pattern).map_err(wrap)?,
            unless: fields.map(|f| Pattern::parse(f).map_err(wrap)).collect::<Result<_, _>>()?,
        });
    }
    Ok(rules)
}

pub fn functional_group_rules() -> &'static [FunctionalGroupRule] {
    static RULES: OnceLock<Vec<FunctionalGroupRule>> = OnceLock::new();
    RULES.get_or_init(|| parse_group_table(FUNCTIONAL_GROUPS_TSV).expect("bundled functional-group table parses"))
}

/// Sorted, deduplicated names of the groups present in `mol`.
pub fn functional_groups(mol: &Molecule) -> Vec<String> {
    let mut names: Vec<String> =
        functional_group_rules().iter().filter(|r| r.hits(mol)).map(|r| r.name.clone()).collect();
    names.sort();
    names.dedup();
    names
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RingFact {
    pub size: usize,
    pub aromatic: bool,
    pub elements: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureFacts {
    pub formula: String,
    pub ring_count: usize,
    pub rings: Vec<RingFact>,
    /// Element counts over atoms in any ring.
    pub ring_atoms: BTreeMap<String, usize>,
    pub functional_groups: Vec<String>,
}

pub fn structure_facts(mol: &Molecule) -> StructureFacts {
    let mut rings: Vec<RingFact> = sssr(mol)
        .iter()
        .map(|ring| {
            let mut elements = BTreeMap::new();
            for &a in ring {
                *elements.entry(mol.atom(a).element.symbol().to_string()).or_insert(0) += 1;
            }
            RingFact { size: ring.len(), aromatic: ring.iter().all(|&a| mol.atom(a).aromatic), elements }
        })
        .collect();
    rings.sort_by(|a, b| (b.aromatic, a.size, &a.elements).cmp(&(a.aromatic, b.size, &b.elements)));
    let mut ring_atoms = BTreeMap::new();
    for i in 0..mol.atom_count() {
        if mol.atom(i).in_ring {
            *ring_atoms.entry(mol.atom(i).element.symbol().to_string()).or_insert(0) += 1;
        }
    }
    StructureFacts {
        formula: molecular_formula(mol).to_string(),
        ring_count: rings.len(),
        rings,
        ring_atoms,
        functional_groups: functional_groups(mol),
    }
}

fn element_list(counts: &BTreeMap<String, usize>) -> String {
    counts.iter().map(|(e, n)| format!("{e}×{n}")).collect::<Vec<_>>().join(", ")
}

impl StructureFacts {
    /// Plain-text rendering used in prompts and by the mock describer.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Formula: {}", self.formula);
        let _ = writeln!(out, "Rings: {}", self.ring_count);
        for r in &self.rings {
            let kind = if r.aromatic { "aromatic" } else { "non-aromatic" };
            let _ = writeln!(out, "- {kind} {}-membered ring ({})", r.size, element_list(&r.elements));
        }
        if !self.ring_atoms.is_empty() {
            let _ = writeln!(out, "Ring atoms: {}", element_list(&self.ring_atoms));
        }
        let groups =
            if self.functional_groups.is_empty() { "none".to_string() } else { self.functional_groups.join(", ") };
        let _ = write!(out, "Functional groups: {groups}");
        out
    }
}

/// Source of the free-text description attached to each KB record.
pub trait Describer {
    fn describe(&self, smiles: &str, facts: &StructureFacts) -> Result<String, String>;
}

/// Deterministic template rendering of the facts.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockDescriber;

impl Describer for MockDescriber {
    fn describe(&self, smiles: &str, facts: &StructureFacts) -> Result<String, String> {
        let rings = match facts.rings.as_slice() {
            [] => "an acyclic fragment".to_string(),
            rs => rs
                .iter()
                .map(|r| {
                    format!(
                        "{} {}-membered ring ({})",
                        if r.aromatic { "an aromatic" } else { "a non-aromatic" },
                        r.size,
                        element_list(&r.elements)
                    )
                })
                .collect::<Vec<_>>()
                .join(" and "),
        };
        let groups = if facts.functional_groups.is_empty() {
            "no listed functional groups".to_string()
        } else {
            format!("functional groups: {}", facts.functional_groups.join(", "))
        };
        Ok(format!("{smiles} ({}) is {rings} with {groups}.", facts.formula))
    }
}

/// Asks a chat model for the description.
pub struct LlmDescriber<'a> {
    pub client: &'a dyn ChatClient,
    pub params: ChatParams,
}

impl Describer for LlmDescriber<'_> {
    fn describe(&self, smiles: &str, facts: &StructureFacts) -> Result<String, String> {
        let mut b = Bindings::new();
        b.insert("smiles", Binding::Text(smiles.to_string()));
        b.insert("facts", Binding::Text(facts.to_text()));
        let prompt = render(TemplateId::Describe, &b, DEFAULT_CHAR_BUDGET).map_err(|e: LlmError| e.to_string())?;
        let r = self
            .client
            .chat(&[ChatMessage::user(prompt.text)], &self.params, CallContext { template: TemplateId::Describe })
            .map_err(|e| e.to_string())?;
        Ok(r.text.trim().to_string())
    }
}

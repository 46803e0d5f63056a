//! Prompt templates with `{name}` placeholders.
//!
//! Every generation template asks for the final structure inside
//! `<answer></answer>` so that [`super::extract_smiles`] can find it.

use std::collections::BTreeMap;

use super::{LlmError, TemplateId};

pub const DEFAULT_CHAR_BUDGET: usize = 16_000;
const ELLIPSIS: char = '…';

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub text: &'static str,
    pub required: &'static [&'static str],
}

const INIT: &str = "You are an expert chemist solving a structure elucidation problem.
Determine the structure of the unknown compound from the data below.

Molecular formula: {formula}
13C NMR: {cnmr}
1H NMR: {hnmr}

Substructures that may occur in the compound, each with a short description:
{substructures}

Work through the degrees of unsaturation, the characteristic chemical shifts, the splitting patterns, and the molecular symmetry.
Finish with the complete structure as one SMILES string inside <answer></answer> tags.";

const CRITIQUE: &str = "You are reviewing a proposed answer to a structure elucidation problem.

Problem:
{question}

Proposed answer:
{answer}

Facts about the proposed molecule:
Molecular formula of the proposed molecule: {formula}
{descriptor}

Compare the proposed molecule with the problem data. Check the formula, the number of distinct carbon environments, the proton counts and splittings, and the functional groups.
List every inconsistency you find and say how the structure should change. Do not give a final answer.";

const REWRITE: &str = "You are improving an answer to a structure elucidation problem.

Problem:
{question}

Previous answer:
{answer}

Critique of the previous answer:
{critique}

Revise the structure so that it addresses the critique and agrees with all of the data.
Finish with the complete structure as one SMILES string inside <answer></answer> tags.";

const DESCRIBE: &str = "You are building a reference library of molecular substructures for NMR structure elucidation.

Substructure (SMILES): {smiles}
Computed facts:
{facts}

Describe this substructure in two or three sentences for a chemist: its ring systems, its functional groups, and the NMR signals it typically produces.";

const TEMPLATES: [PromptTemplate; 4] = [
    PromptTemplate { id: TemplateId::Init, text: INIT, required: &["formula", "cnmr", "hnmr", "substructures"] },
    PromptTemplate {
        id: TemplateId::Critique,
        text: CRITIQUE,
        required: &["question", "answer", "formula", "descriptor"],
    },
    PromptTemplate { id: TemplateId::Rewrite, text: REWRITE, required: &["question", "answer", "critique"] },
    PromptTemplate { id: TemplateId::Describe, text: DESCRIBE, required: &["smiles", "facts"] },
];

pub fn template(id: TemplateId) -> &'static PromptTemplate {
    TEMPLATES.iter().find(|t| t.id == id).expect("every id has a template")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Binding {
    Text(String),
    /// Retrieved substructures as (smiles, description); descriptions are
    /// the only values shortened to fit the character budget.
    Records(Vec<(String, String)>),
}

pub type Bindings = BTreeMap<&'static str, Binding>;

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub text: String,
    /// Values shortened with an ellipsis to respect the budget.
    pub truncated: usize,
}

fn truncate(text: &str, max_chars: usize) -> String {
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    let mut out: String = text.chars().take(max_chars.saturating_sub(1)).collect();
    out.push(ELLIPSIS);
    out
}

fn format_records(records: &[(String, String)], description_chars: Option<usize>) -> (String, usize) {
    if records.is_empty() {
        return ("(none)".to_string(), 0);
    }
    let mut truncated = 0;
    let lines: Vec<String> = records
        .iter()
        .map(|(smiles, description)| {
            let d = match description_chars {
                Some(max) if description.chars().count() > max => {
                    truncated += 1;
                    truncate(description, max)
                }
                _ => description.clone(),
            };
            format!("- {smiles}: {d}")
        })
        .collect();
    (lines.join("\n"), truncated)
}

fn substitute(t: &PromptTemplate, values: &BTreeMap<&str, String>) -> Result<String, LlmError> {
    for name in t.required {
        if !values.contains_key(name) {
            return Err(LlmError::MissingPlaceholder { template: t.id, name: name.to_string() });
        }
    }
    let mut out = String::with_capacity(t.text.len());
    let mut rest = t.text;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}').expect("template braces are balanced");
        let name = &after[..close];
        let value =
            values.get(name).ok_or_else(|| LlmError::MissingPlaceholder { template: t.id, name: name.to_string() })?;
        out.push_str(value);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Renders template `id`. When the result would exceed `budget` characters,
/// record descriptions are shortened evenly, and as a last resort the whole
/// text is cut, each cut ending in an ellipsis.
pub fn render(id: TemplateId, bindings: &Bindings, budget: usize) -> Result<Rendered, LlmError> {
    let t = template(id);
    let build = |description_chars: Option<usize>| -> Result<(String, usize), LlmError> {
        let mut truncated = 0;
        let mut values = BTreeMap::new();
        for (name, binding) in bindings {
            let value = match binding {
                Binding::Text(s) => s.clone(),
                Binding::Records(r) => {
                    let (s, n) = format_records(r, description_chars);
                    truncated += n;
                    s
                }
            };
            values.insert(*name, value);
        }
        Ok((substitute(t, &values)?, truncated))
    };
    let (full, _) = build(None)?;
    let len = full.chars().count();
    if len <= budget {
        return Ok(Rendered { text: full, truncated: 0 });
    }
    let described: Vec<usize> = bindings
        .values()
        .filter_map(|b| match b {
            Binding::Records(r) => Some(r.iter().map(|(_, d)| d.chars().count()).collect::<Vec<_>>()),
            Binding::Text(_) => None,
        })
        .flatten()
        .collect();
    let mut truncated = 0;
    let mut text = full;
    if !described.is_empty() {
        let total: usize = described.iter().sum();
        let fixed = len - total;
        let available = budget.saturating_sub(fixed);
        let per_record = (available / described.len()).max(1);
        let (shortened, n) = build(Some(per_record))?;
        text = shortened;
        truncated = n;
    }
    if text.chars().count() > budget {
        text = truncate(&text, budget);
        truncated += 1;
    }
    if truncated > 0 {
        log::warn!("{id} prompt exceeded {budget} characters; {truncated} value(s) truncated");
    }
    Ok(Rendered { text, truncated })
}

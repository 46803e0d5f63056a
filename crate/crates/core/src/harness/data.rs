//! Molecule–spectrum pair files and simulated questions.
//!
//! A pair file holds one record per line: a JSON object
//! `{"smiles": ..., "cnmr": ..., "hnmr": ...}` whose spectra are optional, a
//! SMILES string alone, or `SMILES<TAB>C-NMR<TAB>H-NMR`. A record without
//! spectra is simulated. Blank lines and `#` comments are skipped.

use std::path::Path;

use serde::Deserialize;

use crate::chem::{molecular_formula, parse_smiles, Molecule};
use crate::search::ElucidationQuestion;
use crate::spectra::{parse_spectrum, simulate_nmr, tokenize, NmrSpectrum, SpectrumTokens};

use super::HarnessError;

#[derive(Debug, Clone)]
pub struct Pair {
    pub smiles: String,
    pub molecule: Molecule,
    pub spectrum: NmrSpectrum,
}

impl Pair {
    pub fn tokens(&self) -> SpectrumTokens {
        tokenize(&self.spectrum)
    }
}

#[derive(Deserialize)]
struct PairLine {
    smiles: String,
    cnmr: Option<String>,
    hnmr: Option<String>,
}

pub fn parse_pairs(text: &str, seed: u64) -> Result<Vec<Pair>, HarnessError> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |m: String| HarnessError::Format(format!("line {}: {m}", i + 1));
        let record = if line.trim_start().starts_with('{') {
            serde_json::from_str::<PairLine>(line).map_err(|e| err(e.to_string()))?
        } else {
            match line.split('\t').collect::<Vec<_>>().as_slice() {
                [s] => PairLine { smiles: s.trim().to_string(), cnmr: None, hnmr: None },
                [s, c, h] => {
                    PairLine { smiles: s.trim().to_string(), cnmr: Some(c.to_string()), hnmr: Some(h.to_string()) }
                }
                _ => return Err(err("expected SMILES or SMILES, C-NMR, H-NMR separated by tabs".into())),
            }
        };
        let molecule = parse_smiles(&record.smiles).map_err(|e| err(e.to_string()))?;
        let spectrum = match (&record.cnmr, &record.hnmr) {
            (None, None) => simulate_nmr(&molecule, seed),
            (Some(c), Some(h)) => parse_spectrum(c, h),
            _ => return Err(err("cnmr and hnmr must be given together".into())),
        }
        .map_err(|e| err(e.to_string()))?;
        pairs.push(Pair { smiles: record.smiles, molecule, spectrum });
    }
    Ok(pairs)
}

pub fn load_pairs(path: impl AsRef<Path>, seed: u64) -> Result<Vec<Pair>, HarnessError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_pairs(&text, seed).map_err(|e| match e {
        HarnessError::Format(m) => HarnessError::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// A question carrying the pair's spectra, its formula, and its SMILES as the
/// evaluation target.
pub fn question_for(id: &str, pair: &Pair) -> ElucidationQuestion {
    ElucidationQuestion {
        id: id.to_string(),
        formula: molecular_formula(&pair.molecule).to_string(),
        cnmr: pair.spectrum.cnmr_text(),
        hnmr: pair.spectrum.hnmr_text(),
        ir_image: None,
        target_smiles: Some(pair.smiles.clone()),
    }
}

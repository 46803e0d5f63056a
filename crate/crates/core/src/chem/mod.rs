//! Native cheminformatics: SMILES parsing, canonical form, formulas,
//! substructure patterns, and fingerprints.

mod element;
mod fingerprint;
mod formula;
mod molecule;
mod pattern;
pub mod rings;
mod smiles;
mod writer;

pub use element::Element;
pub use fingerprint::{
    fingerprint_set, keys_fingerprint, morgan_fingerprint, parse_key_table, path_fingerprint, structural_keys,
    tanimoto, Fingerprint, FingerprintSet, StructuralKey, FINGERPRINT_BITS, KEY_BITS, MORGAN_BITS, PATH_BITS,
};
pub use formula::{molecular_formula, parse_formula, Formula};
pub use molecule::{Atom, Bond, BondOrder, Molecule};
pub use pattern::Pattern;
pub use smiles::parse_smiles;
pub use writer::{canonical_ranks, canonical_smiles, symmetry_classes, write_smiles};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChemError {
    #[error("syntax error at position {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("valence error on atom {atom} ({symbol}): bond order sum {bond_order_sum} exceeds allowed valence")]
    Valence { atom: usize, symbol: String, bond_order_sum: u32 },
    #[error("invalid molecular graph: {0}")]
    InvalidGraph(String),
    #[error("bit set length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("pattern table line {line}: {message}")]
    PatternTable { line: usize, message: String },
}

/// Parses and canonicalizes in one step.
pub fn canonicalize_smiles(text: &str) -> Result<String, ChemError> {
    parse_smiles(text).map(|m| canonical_smiles(&m))
}

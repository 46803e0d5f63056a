//! Textual stand-in for a rendered structure image in critique prompts.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::chem::{canonical_smiles, Element, Molecule};
use crate::kb::structure_facts;

/// Formula, ring summary, chain summary, and functional groups of `mol`.
pub fn structure_descriptor(mol: &Molecule) -> String {
    let facts = structure_facts(mol);
    let chain_carbons =
        (0..mol.atom_count()).filter(|&i| mol.atom(i).element == Element::C && !mol.atom(i).in_ring).count();
    let mut out = String::new();
    let _ = writeln!(out, "Canonical SMILES: {}", canonical_smiles(mol));
    let _ = writeln!(out, "Heavy atoms: {}", mol.atom_count());
    let _ = writeln!(out, "Carbons outside rings: {chain_carbons}");
    out.push_str(&facts.to_text());
    out
}

/// Optional per-node image source for vision endpoints.
pub trait StructureImages: Sync {
    /// `(media type, bytes)` for the canonical SMILES, if one is available.
    fn image(&self, canonical: &str) -> Option<(String, Vec<u8>)>;
}

/// Images stored as `<dir>/<canonical SMILES>.png`.
#[derive(Debug, Clone)]
pub struct ImageDir(pub PathBuf);

impl StructureImages for ImageDir {
    fn image(&self, canonical: &str) -> Option<(String, Vec<u8>)> {
        let path = self.0.join(format!("{canonical}.png"));
        std::fs::read(path).ok().map(|bytes| ("image/png".to_string(), bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    #[test]
    fn descriptor_lists_the_facts() {
        let d = structure_descriptor(&parse_smiles("CCOC(=O)c1ccsc1").unwrap());
        assert!(d.contains("Formula: C7H8O2S"), "{d}");
        assert!(d.contains("aromatic 5-membered ring"));
        assert!(d.contains("Carbons outside rings: 3"));
        assert!(d.contains("ester"));
    }

    #[test]
    fn image_dir_reads_by_canonical_name() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("CCO.png"), b"png").unwrap();
        let images = ImageDir(dir.path().to_path_buf());
        assert_eq!(images.image("CCO"), Some(("image/png".into(), b"png".to_vec())));
        assert_eq!(images.image("CCC"), None);
    }
}

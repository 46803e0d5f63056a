//! Substructure query patterns written in SMILES syntax, matched by
//! backtracking subgraph monomorphism.
//!
//! Semantics: an uppercase symbol matches that element at any aromaticity,
//! lowercase only aromatic atoms, `*` any atom. Bracket atoms additionally pin
//! the charge, and the hydrogen count when `H` is written. An unwritten bond
//! matches single or aromatic (aromatic only between two lowercase atoms);
//! `-`, `=`, `#`, `:` match exactly.

use std::collections::BTreeSet;

use super::molecule::{BondOrder, Molecule};
use super::smiles::{parse_raw_with, RawAtom, RawBond};
use super::ChemError;

#[derive(Debug, Clone)]
pub struct Pattern {
    source: String,
    atoms: Vec<RawAtom>,
    /// Per pattern atom: (neighbor, bond query).
    adjacency: Vec<Vec<(usize, RawBond)>>,
    /// Match order: each atom after the first of its component has an
    /// earlier-ordered neighbor.
    order: Vec<usize>,
}

impl Pattern {
    pub fn parse(text: &str) -> Result<Pattern, ChemError> {
        let raw = parse_raw_with(text, true)?;
        let n = raw.atoms.len();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b, bond) in &raw.bonds {
            adjacency[a].push((b, bond));
            adjacency[b].push((a, bond));
        }
        let mut order = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        for start in 0..n {
            if placed[start] {
                continue;
            }
            placed[start] = true;
            let mut i = order.len();
            order.push(start);
            while i < order.len() {
                let v = order[i];
                i += 1;
                for &(w, _) in &adjacency[v] {
                    if !placed[w] {
                        placed[w] = true;
                        order.push(w);
                    }
                }
            }
        }
        Ok(Pattern { source: text.trim().to_string(), atoms: raw.atoms, adjacency, order })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn matches(&self, mol: &Molecule) -> bool {
        let mut found = false;
        self.search(mol, &mut |_| {
            found = true;
            false
        });
        found
    }

    /// First embedding found: `result[p]` is the molecule atom for pattern atom `p`.
    pub fn find_first(&self, mol: &Molecule) -> Option<Vec<usize>> {
        let mut out = None;
        self.search(mol, &mut |m| {
            out = Some(m.to_vec());
            false
        });
        out
    }

    /// Number of distinct molecule atom sets covered by an embedding.
    pub fn count_unique(&self, mol: &Molecule) -> usize {
        let mut sets = BTreeSet::new();
        self.search(mol, &mut |m| {
            let mut s = m.to_vec();
            s.sort_unstable();
            sets.insert(s);
            true
        });
        sets.len()
    }

    /// Molecule atoms that pattern atom 0 maps to in some embedding.
    pub fn anchor_atoms(&self, mol: &Molecule) -> BTreeSet<usize> {
        let mut anchors = BTreeSet::new();
        self.search(mol, &mut |m| {
            anchors.insert(m[0]);
            true
        });
        anchors
    }

    fn atom_ok(&self, p: usize, mol: &Molecule, t: usize) -> bool {
        let q = &self.atoms[p];
        if q.wildcard {
            return true;
        }
        let a = mol.atom(t);
        if a.element != q.element || (q.aromatic && !a.aromatic) {
            return false;
        }
        if q.bracket {
            if a.charge != q.charge {
                return false;
            }
            if let Some(h) = q.hydrogens {
                if mol.total_hydrogens(t) != h as u32 {
                    return false;
                }
            }
        }
        true
    }

    fn bond_ok(&self, pa: usize, pb: usize, query: RawBond, order: BondOrder) -> bool {
        match query {
            RawBond::Implicit => {
                let both_lower = self.atoms[pa].aromatic && self.atoms[pb].aromatic;
                if both_lower {
                    order == BondOrder::Aromatic
                } else {
                    matches!(order, BondOrder::Single | BondOrder::Aromatic)
                }
            }
            RawBond::Single => order == BondOrder::Single,
            RawBond::Double => order == BondOrder::Double,
            RawBond::Triple => order == BondOrder::Triple,
            RawBond::Aromatic => order == BondOrder::Aromatic,
        }
    }

    /// Enumerates embeddings; `visit` returns `false` to stop.
    fn search(&self, mol: &Molecule, visit: &mut dyn FnMut(&[usize]) -> bool) {
        let n = self.atoms.len();
        if n == 0 || n > mol.atom_count() {
            return;
        }
        let mut mapping = vec![usize::MAX; n];
        let mut used = vec![false; mol.atom_count()];
        self.extend(mol, 0, &mut mapping, &mut used, visit);
    }

    fn extend(
        &self,
        mol: &Molecule,
        depth: usize,
        mapping: &mut [usize],
        used: &mut [bool],
        visit: &mut dyn FnMut(&[usize]) -> bool,
    ) -> bool {
        if depth == self.order.len() {
            return visit(mapping);
        }
        let p = self.order[depth];
        let anchor = self.adjacency[p].iter().find(|&&(q, _)| mapping[q] != usize::MAX).map(|&(q, _)| mapping[q]);
        let candidates: Vec<usize> = match anchor {
            Some(t) => mol.neighbors(t).iter().map(|&(nb, _)| nb).collect(),
            None => (0..mol.atom_count()).collect(),
        };
        for t in candidates {
            if used[t] || !self.atom_ok(p, mol, t) {
                continue;
            }
            let bonds_ok = self.adjacency[p].iter().all(|&(q, query)| {
                let tq = mapping[q];
                tq == usize::MAX || mol.bond_between(t, tq).is_some_and(|b| self.bond_ok(p, q, query, b.order))
            });
            if !bonds_ok {
                continue;
            }
            mapping[p] = t;
            used[t] = true;
            let keep_going = self.extend(mol, depth + 1, mapping, used, visit);
            mapping[p] = usize::MAX;
            used[t] = false;
            if !keep_going {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn hit(pattern: &str, smiles: &str) -> bool {
        Pattern::parse(pattern).unwrap().matches(&parse_smiles(smiles).unwrap())
    }

    #[test]
    fn element_and_aromatic_semantics() {
        assert!(hit("C", "c1ccccc1"));
        assert!(!hit("c", "CCCC"));
        assert!(hit("c", "Cc1ccccc1"));
        assert!(hit("*1**1", "C1CC1"));
        assert!(!hit("*1**1", "C1CCC1"));
    }

    #[test]
    fn bond_semantics() {
        assert!(hit("C=O", "CC(=O)C"));
        assert!(!hit("C=O", "CCO"));
        assert!(hit("C#N", "CC#N"));
        assert!(!hit("C-C", "c1ccccc1"));
        assert!(hit("CC", "c1ccccc1"));
        assert!(hit("cc", "c1ccccc1"));
        assert!(hit("c-c", "c1ccccc1-c1ccccc1"));
    }

    #[test]
    fn bracket_constraints() {
        assert!(hit("[OH]C", "CCO"));
        assert!(!hit("[OH]C", "COC"));
        assert!(hit("[N+](=O)[O-]", "C[N+](=O)[O-]"));
        assert!(!hit("[N+]", "CN"));
    }

    #[test]
    fn ester_and_ring_counts() {
        assert!(hit("CC(=O)OC", "CCC(=O)OCC"));
        let p = Pattern::parse("c1ccccc1").unwrap();
        assert_eq!(p.count_unique(&parse_smiles("c1ccc2ccccc2c1").unwrap()), 2);
        assert_eq!(p.find_first(&parse_smiles("Cc1ccccc1").unwrap()).unwrap().len(), 6);
    }
}

//! Ring-system and chain substructure extraction.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::chem::rings::sssr;
use crate::chem::{canonical_smiles, Element, Molecule};

/// Ring systems: smallest rings sharing two or more atoms are merged
/// (transitively), each system is extended by every atom bonded to it, and
/// the result is returned as an induced subgraph. Keyed by canonical SMILES.
pub fn extract_ring_substructures(mol: &Molecule) -> BTreeMap<String, Molecule> {
    let rings: Vec<BTreeSet<usize>> = sssr(mol).into_iter().map(|r| r.into_iter().collect()).collect();
    let mut parent: Vec<usize> = (0..rings.len()).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        parent[x] = r;
        r
    }
    for i in 0..rings.len() {
        for j in i + 1..rings.len() {
            if rings[i].intersection(&rings[j]).count() >= 2 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut systems: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (i, ring) in rings.iter().enumerate() {
        let root = find(&mut parent, i);
        systems.entry(root).or_default().extend(ring.iter().copied());
    }
    let mut out = BTreeMap::new();
    for system in systems.values() {
        let mut atoms = system.clone();
        for &a in system {
            atoms.extend(mol.neighbors(a).iter().map(|&(nb, _)| nb));
        }
        let selection: Vec<usize> = atoms.into_iter().collect();
        let sub = mol.induced_subgraph(&selection);
        out.insert(canonical_smiles(&sub), sub);
    }
    out
}

/// Chain substructures: for every carbon outside all rings, the induced
/// subgraph of atoms within two bonds of it, dropped if it touches a ring
/// atom. Keyed by canonical SMILES.
pub fn extract_chain_substructures(mol: &Molecule) -> BTreeMap<String, Molecule> {
    let mut out = BTreeMap::new();
    for anchor in 0..mol.atom_count() {
        let atom = mol.atom(anchor);
        if atom.element != Element::C || atom.in_ring {
            continue;
        }
        let mut dist = vec![usize::MAX; mol.atom_count()];
        dist[anchor] = 0;
        let mut queue = VecDeque::from([anchor]);
        let mut selection = Vec::new();
        while let Some(v) = queue.pop_front() {
            selection.push(v);
            if dist[v] == 2 {
                continue;
            }
            for &(w, _) in mol.neighbors(v) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        if selection.iter().any(|&a| mol.atom(a).in_ring) {
            continue;
        }
        let sub = mol.induced_subgraph(&selection);
        out.entry(canonical_smiles(&sub)).or_insert(sub);
    }
    out
}

/// Canonical SMILES of every ring and chain substructure of `mol`.
pub fn substructure_set(mol: &Molecule) -> BTreeSet<String> {
    let mut set: BTreeSet<String> = extract_ring_substructures(mol).into_keys().collect();
    set.extend(extract_chain_substructures(mol).into_keys());
    set
}

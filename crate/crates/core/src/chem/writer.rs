//! SMILES writing and canonicalization.
//!
//! Canonical form: atom classes are refined Morgan-style from the invariant
//! `(element, degree, charge, H count, smallest ring size, aromaticity)`; any
//! remaining ties are broken exhaustively and the lexicographically smallest
//! output string wins.

use std::fmt::Write as _;

use super::molecule::{implicit_hydrogens, BondOrder, Molecule};
use super::rings::smallest_ring_sizes;

/// Upper bound on tie-break leaves explored per molecule. Only highly
/// symmetric graphs come near it; past the bound a single branch is followed.
const MAX_TIE_BREAK_LEAVES: usize = 20_000;

/// Writes SMILES for `mol`, traversing atoms in the order given by `ranks`
/// (lower rank first). Any rank assignment yields a valid spelling, so random
/// ranks produce random equivalent SMILES.
pub fn write_smiles(mol: &Molecule, ranks: &[u32]) -> String {
    assert_eq!(ranks.len(), mol.atom_count());
    let n = mol.atom_count();
    let mut visited = vec![false; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&a| (ranks[a], a));
    let mut out = String::new();
    let mut first = true;
    for &start in &order {
        if visited[start] {
            continue;
        }
        if !first {
            out.push('.');
        }
        first = false;
        let plan = plan_component(mol, ranks, start, &mut visited);
        emit(mol, &plan, start, &mut out);
    }
    out
}

struct Plan {
    children: Vec<Vec<usize>>,
    /// Ring-closure bonds touching each atom, in the order they are written.
    ring_bonds: Vec<Vec<usize>>,
    parent_bond: Vec<Option<usize>>,
}

fn plan_component(mol: &Molecule, ranks: &[u32], start: usize, visited: &mut [bool]) -> Plan {
    let n = mol.atom_count();
    let mut children = vec![Vec::new(); n];
    let mut ring_bonds = vec![Vec::new(); n];
    let mut parent_bond = vec![None; n];
    let mut position = vec![usize::MAX; n];
    let mut used_bond = vec![false; mol.bond_count()];
    let mut counter = 0;

    // Iterative DFS: (atom, sorted neighbor list, next index).
    visited[start] = true;
    position[start] = counter;
    counter += 1;
    let sorted = |a: usize| {
        let mut nbrs = mol.neighbors(a).to_vec();
        nbrs.sort_by_key(|&(nb, _)| (ranks[nb], nb));
        nbrs
    };
    let mut stack = vec![(start, sorted(start), 0usize)];
    let mut closures: Vec<(usize, usize, usize)> = Vec::new();
    while let Some((v, nbrs, idx)) = stack.last_mut() {
        let v = *v;
        if *idx >= nbrs.len() {
            stack.pop();
            continue;
        }
        let (w, b) = nbrs[*idx];
        *idx += 1;
        if used_bond[b] {
            continue;
        }
        used_bond[b] = true;
        if visited[w] {
            // Back edge: ring closure opened at the earlier atom.
            closures.push((w, v, b));
        } else {
            visited[w] = true;
            position[w] = counter;
            counter += 1;
            parent_bond[w] = Some(b);
            children[v].push(w);
            let nw = sorted(w);
            stack.push((w, nw, 0));
        }
    }
    // Opening side lists closures by partner position; closing side in opening order.
    let mut opens: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for &(opener, closer, b) in &closures {
        opens[opener].push((position[closer], b));
    }
    for list in opens.iter_mut() {
        list.sort_unstable();
    }
    let mut closes: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut openers: Vec<usize> = (0..n).filter(|&a| !opens[a].is_empty()).collect();
    openers.sort_by_key(|&a| position[a]);
    for &a in &openers {
        for &(_, b) in &opens[a] {
            closes[mol.bonds()[b].other(a)].push(b);
        }
    }
    for a in 0..n {
        ring_bonds[a] = closes[a].iter().copied().chain(opens[a].iter().map(|&(_, b)| b)).collect();
    }
    Plan { children, ring_bonds, parent_bond }
}

fn emit(mol: &Molecule, plan: &Plan, start: usize, out: &mut String) {
    let mut digit_of_bond: Vec<Option<u32>> = vec![None; mol.bond_count()];
    let mut digit_in_use = [false; 100];
    enum Step {
        Atom(usize),
        Open,
        Close,
    }
    let mut stack = vec![Step::Atom(start)];
    while let Some(step) = stack.pop() {
        let atom = match step {
            Step::Open => {
                out.push('(');
                continue;
            }
            Step::Close => {
                out.push(')');
                continue;
            }
            Step::Atom(a) => a,
        };
        if let Some(b) = plan.parent_bond[atom] {
            out.push_str(bond_symbol(mol, b));
        }
        out.push_str(&atom_symbol(mol, atom));
        // Free closing digits first so they can be reused by openings here.
        let mut opened_here = Vec::new();
        for &b in &plan.ring_bonds[atom] {
            if let Some(d) = digit_of_bond[b] {
                write_ring_digit(out, d);
                digit_in_use[d as usize] = false;
            } else {
                opened_here.push(b);
            }
        }
        for b in opened_here {
            let d = (1..100).find(|&d| !digit_in_use[d]).expect("more than 99 open rings") as u32;
            digit_in_use[d as usize] = true;
            digit_of_bond[b] = Some(d);
            out.push_str(bond_symbol(mol, b));
            write_ring_digit(out, d);
        }
        // All children but the last are parenthesized branches; LIFO order.
        if let Some((&last, rest)) = plan.children[atom].split_last() {
            stack.push(Step::Atom(last));
            for &child in rest.iter().rev() {
                stack.push(Step::Close);
                stack.push(Step::Atom(child));
                stack.push(Step::Open);
            }
        }
    }
}

fn write_ring_digit(out: &mut String, d: u32) {
    if d < 10 {
        let _ = write!(out, "{d}");
    } else {
        let _ = write!(out, "%{d:02}");
    }
}

fn bond_symbol(mol: &Molecule, bond: usize) -> &'static str {
    let b = &mol.bonds()[bond];
    match b.order {
        BondOrder::Single if mol.atom(b.a).aromatic && mol.atom(b.b).aromatic => "-",
        BondOrder::Single | BondOrder::Aromatic => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
    }
}

fn atom_symbol(mol: &Molecule, idx: usize) -> String {
    let atom = mol.atom(idx);
    let symbol = atom.element.symbol();
    let symbol = if atom.aromatic { symbol.to_ascii_lowercase() } else { symbol.to_string() };
    if atom.charge == 0 && atom.element.is_organic_subset() {
        let implicit = implicit_hydrogens(atom.element, atom.aromatic, mol.bond_order_sum(idx));
        if implicit == Some(atom.hydrogens) {
            return symbol;
        }
    }
    let mut s = format!("[{symbol}");
    match atom.hydrogens {
        0 => {}
        1 => s.push('H'),
        h => {
            let _ = write!(s, "H{h}");
        }
    }
    match atom.charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        c if c > 0 => {
            let _ = write!(s, "+{c}");
        }
        c => {
            let _ = write!(s, "-{}", -c);
        }
    }
    s.push(']');
    s
}

fn initial_invariants(mol: &Molecule) -> Vec<u32> {
    let ring_sizes = smallest_ring_sizes(mol);
    let keys: Vec<_> = (0..mol.atom_count())
        .map(|i| {
            let a = mol.atom(i);
            (a.element.atomic_number(), mol.degree(i), a.charge, a.hydrogens, ring_sizes[i], a.aromatic)
        })
        .collect();
    dense_ranks(&keys)
}

fn dense_ranks<K: Ord>(keys: &[K]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut ranks = vec![0u32; keys.len()];
    let mut rank = 0;
    for (pos, &atom) in order.iter().enumerate() {
        if pos > 0 && keys[order[pos - 1]] != keys[atom] {
            rank += 1;
        }
        ranks[atom] = rank;
    }
    ranks
}

fn class_count(ranks: &[u32]) -> usize {
    ranks.iter().copied().max().map_or(0, |m| m as usize + 1)
}

/// Iterative neighborhood refinement until the partition stabilizes.
fn refine(mol: &Molecule, ranks: &[u32]) -> Vec<u32> {
    let mut ranks = ranks.to_vec();
    loop {
        let keys: Vec<(u32, Vec<(u32, u8)>)> = (0..mol.atom_count())
            .map(|i| {
                let mut nbrs: Vec<(u32, u8)> =
                    mol.neighbors(i).iter().map(|&(nb, b)| (ranks[nb], mol.bonds()[b].order.code())).collect();
                nbrs.sort_unstable();
                (ranks[i], nbrs)
            })
            .collect();
        let next = dense_ranks(&keys);
        if class_count(&next) == class_count(&ranks) {
            return next;
        }
        ranks = next;
    }
}

/// Symmetry classes of atoms after invariant refinement (no tie-breaking).
/// Atoms with equal class are topologically indistinguishable by refinement.
pub fn symmetry_classes(mol: &Molecule) -> Vec<u32> {
    refine(mol, &initial_invariants(mol))
}

/// Canonical atom ranks: the traversal order that produces [`canonical_smiles`].
pub fn canonical_ranks(mol: &Molecule) -> Vec<u32> {
    canonicalize(mol).1
}

/// Canonical SMILES, invariant under atom renumbering.
pub fn canonical_smiles(mol: &Molecule) -> String {
    canonicalize(mol).0
}

fn canonicalize(mol: &Molecule) -> (String, Vec<u32>) {
    if mol.atom_count() == 0 {
        return (String::new(), Vec::new());
    }
    let base = symmetry_classes(mol);
    let mut best: Option<(String, Vec<u32>)> = None;
    let mut leaves = 0usize;
    tie_break(mol, base, &mut best, &mut leaves);
    best.expect("at least one leaf")
}

fn tie_break(mol: &Molecule, ranks: Vec<u32>, best: &mut Option<(String, Vec<u32>)>, leaves: &mut usize) {
    let n = ranks.len();
    if class_count(&ranks) == n {
        *leaves += 1;
        let s = write_smiles(mol, &ranks);
        if best.as_ref().is_none_or(|(b, _)| s < *b) {
            *best = Some((s, ranks));
        }
        return;
    }
    // Smallest rank value shared by more than one atom.
    let mut counts = vec![0usize; n];
    for &r in &ranks {
        counts[r as usize] += 1;
    }
    let target = counts.iter().position(|&c| c > 1).unwrap() as u32;
    let members: Vec<usize> = (0..n).filter(|&a| ranks[a] == target).collect();
    for (k, &chosen) in members.iter().enumerate() {
        if k > 0 && *leaves >= MAX_TIE_BREAK_LEAVES {
            break;
        }
        let keys: Vec<(u32, u8)> = (0..n).map(|a| (ranks[a], u8::from(ranks[a] == target && a != chosen))).collect();
        let split = refine(mol, &dense_ranks(&keys));
        tie_break(mol, split, best, leaves);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn canon(s: &str) -> String {
        canonical_smiles(&parse_smiles(s).unwrap())
    }

    #[test]
    fn spellings_agree() {
        assert_eq!(canon("OCC"), canon("CCO"));
        assert_eq!(canon("C1=CC=CC=C1"), canon("c1ccccc1"));
        assert_eq!(canon("CC(=O)O"), canon("OC(C)=O"));
        assert_eq!(canon("c1ccc2ccccc2c1"), canon("C1=CC=C2C=CC=CC2=C1"));
        assert_ne!(canon("CCO"), canon("COC"));
    }

    #[test]
    fn canonical_is_idempotent() {
        for s in [
            "CCC(=O)OC(=O)CC",
            "c1ccc2ccccc2c1",
            "C1CC2CCC1C2",
            "[NH4+].[Cl-]",
            "c1cc[nH]c1",
            "OC(=O)c1ccccc1O",
            "C#N",
            "C12C3C4C1C5C2C3C45",
        ] {
            let once = canon(s);
            assert_eq!(canon(&once), once, "not a fixed point for {s}");
        }
    }

    #[test]
    fn writes_brackets_only_when_needed() {
        assert_eq!(canon("C"), "C");
        assert_eq!(canon("[NH4+]"), "[NH4+]");
        assert!(canon("c1cc[nH]c1").contains("[nH]"));
        assert!(canon("c1ccccc1-c1ccccc1").contains('-'));
    }
}

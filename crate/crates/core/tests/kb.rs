mod common;

use std::collections::{BTreeMap, BTreeSet};

use kmse::chem::{canonical_smiles, parse_smiles, Element, Molecule};
use kmse::kb::{build_kb, extract_chain_substructures, extract_ring_substructures, substructure_set, MockDescriber};
use proptest::prelude::*;

/// Ring systems as blocks of the ring-bond graph: two ring bonds sharing an
/// atom `u` belong together when their far ends stay connected without `u`.
fn oracle_ring_systems(mol: &Molecule) -> BTreeSet<String> {
    let ring_bonds: Vec<(usize, usize)> = mol.bonds().iter().filter(|b| b.in_ring).map(|b| (b.a, b.b)).collect();
    let n = mol.atom_count();
    let connected_without = |from: usize, to: usize, banned: usize| {
        let mut seen = vec![false; n];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            for &(a, b) in &ring_bonds {
                for (x, y) in [(a, b), (b, a)] {
                    if x == v && y != banned && !seen[y] {
                        seen[y] = true;
                        stack.push(y);
                    }
                }
            }
        }
        false
    };
    let m = ring_bonds.len();
    let mut group: Vec<usize> = (0..m).collect();
    for i in 0..m {
        for j in 0..m {
            let (a, b) = ring_bonds[i];
            let (c, d) = ring_bonds[j];
            for (u, x) in [(a, b), (b, a)] {
                for (w, y) in [(c, d), (d, c)] {
                    if u == w && x != y && connected_without(x, y, u) {
                        let (gi, gj) = (group[i], group[j]);
                        for g in group.iter_mut() {
                            if *g == gj {
                                *g = gi;
                            }
                        }
                    }
                }
            }
        }
    }
    let mut systems: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (i, &(a, b)) in ring_bonds.iter().enumerate() {
        systems.entry(group[i]).or_default().extend([a, b]);
    }
    systems
        .values()
        .map(|atoms| {
            let mut ext = atoms.clone();
            for &a in atoms {
                ext.extend(mol.neighbors(a).iter().map(|&(nb, _)| nb));
            }
            canonical_smiles(&mol.induced_subgraph(&ext.into_iter().collect::<Vec<_>>()))
        })
        .collect()
}

/// Chain neighborhoods via all-pairs shortest paths.
fn oracle_chains(mol: &Molecule) -> BTreeSet<String> {
    let n = mol.atom_count();
    let mut d = vec![vec![usize::MAX / 2; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for b in mol.bonds() {
        d[b.a][b.b] = 1;
        d[b.b][b.a] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    (0..n)
        .filter(|&a| mol.atom(a).element == Element::C && !mol.atom(a).in_ring)
        .filter_map(|a| {
            let sel: Vec<usize> = (0..n).filter(|&j| d[a][j] <= 2).collect();
            (!sel.iter().any(|&j| mol.atom(j).in_ring)).then(|| canonical_smiles(&mol.induced_subgraph(&sel)))
        })
        .collect()
}

#[test]
fn extraction_matches_oracles_on_corpus() {
    for mol in common::corpus() {
        let rings: BTreeSet<String> = extract_ring_substructures(&mol).into_keys().collect();
        assert_eq!(rings, oracle_ring_systems(&mol), "{}", mol.source());
        let chains: BTreeSet<String> = extract_chain_substructures(&mol).into_keys().collect();
        assert_eq!(chains, oracle_chains(&mol), "{}", mol.source());
    }
}

#[test]
fn threshold_filter_matches_brute_force_count() {
    let smiles: Vec<&str> = common::CORPUS.lines().take(100).collect();
    let mols: Vec<Molecule> = smiles.iter().map(|s| parse_smiles(s).unwrap()).collect();
    let per_mol: Vec<BTreeSet<String>> =
        mols.iter().map(|m| oracle_ring_systems(m).union(&oracle_chains(m)).cloned().collect()).collect();
    let candidates: BTreeSet<&String> = per_mol.iter().flatten().collect();
    for threshold in [1, 2, 3, 5, 10, 25] {
        let mut expected: Vec<(usize, String)> = candidates
            .iter()
            .map(|c| (per_mol.iter().filter(|s| s.contains(*c)).count(), (*c).clone()))
            .filter(|(n, _)| *n >= threshold)
            .collect();
        expected.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let kb = build_kb(smiles.iter().copied(), threshold, &MockDescriber).unwrap();
        let got: Vec<(usize, String)> = kb.records.iter().map(|r| (r.count, r.smiles.clone())).collect();
        assert_eq!(got, expected, "threshold {threshold}");
    }
}

#[test]
fn ring_fragments_contain_a_ring_and_chains_none() {
    for mol in common::corpus() {
        for sub in extract_ring_substructures(&mol).values() {
            assert!(sub.atoms().iter().any(|a| a.in_ring));
        }
        for sub in extract_chain_substructures(&mol).values() {
            assert!(sub.atoms().iter().all(|a| !a.in_ring));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn extraction_is_permutation_invariant(idx in 0usize..297, seed in any::<u64>()) {
        let mols = common::corpus();
        let mol = &mols[idx % mols.len()];
        let perm = common::permutation(mol.atom_count(), seed);
        prop_assert_eq!(substructure_set(mol), substructure_set(&mol.permuted(&perm)));
    }
}

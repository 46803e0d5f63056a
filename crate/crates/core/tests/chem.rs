mod common;

use kmse::chem::{
    canonical_smiles, fingerprint_set, molecular_formula, parse_formula, parse_smiles, rings, tanimoto, write_smiles,
    Fingerprint,
};
use proptest::prelude::*;

use common::{corpus, isomorphic, permutation};

const ORACLE: &str = include_str!("fixtures/corpus_oracle.tsv");

#[test]
fn corpus_matches_reference_toolkit_counts() {
    for line in ORACLE.lines().filter(|l| !l.starts_with('#')) {
        let f: Vec<&str> = line.split('\t').collect();
        let mol = parse_smiles(f[0]).unwrap();
        let expected_formula = f[1].trim_end_matches(['+', '-']);
        assert_eq!(molecular_formula(&mol).to_string(), expected_formula, "{}", f[0]);
        assert_eq!(mol.atom_count(), f[2].parse::<usize>().unwrap(), "{}", f[0]);
        let aromatic = mol.atoms().iter().filter(|a| a.aromatic).count();
        assert_eq!(aromatic, f[3].parse::<usize>().unwrap(), "aromatic atoms of {}", f[0]);
        assert_eq!(rings::sssr(&mol).len(), f[4].parse::<usize>().unwrap(), "rings of {}", f[0]);
    }
}

#[test]
fn canonical_form_round_trips_to_an_isomorphic_graph() {
    for mol in corpus() {
        let canon = canonical_smiles(&mol);
        let back = parse_smiles(&canon).unwrap();
        assert!(isomorphic(&mol, &back), "{} -> {canon}", mol.source());
        assert_eq!(canonical_smiles(&back), canon, "canonical form not idempotent for {}", mol.source());
    }
}

#[test]
fn kekule_and_aromatic_spellings_agree() {
    for (kekule, aromatic) in [
        ("C1=CC=CC=C1", "c1ccccc1"),
        ("C1=CC=C2C=CC=CC2=C1", "c1ccc2ccccc2c1"),
        ("C1=CSC=C1", "c1ccsc1"),
        ("C1=CC=NC=C1", "c1ccncc1"),
        ("C1=CNC=C1", "c1cc[nH]c1"),
        ("CC1=CC=CC=C1O", "Cc1ccccc1O"),
    ] {
        let a = parse_smiles(kekule).unwrap();
        let b = parse_smiles(aromatic).unwrap();
        assert!(isomorphic(&a, &b), "{kekule} vs {aromatic}");
        assert_eq!(canonical_smiles(&a), canonical_smiles(&b));
    }
}

#[test]
fn formula_fixtures() {
    let f = parse_formula("C6H10O3").unwrap();
    assert_eq!(f.to_string(), "C6H10O3");
    assert_eq!(molecular_formula(&parse_smiles("CCC(=O)OC(=O)CC").unwrap()), f);
}

#[test]
fn fingerprints_survive_permutation() {
    for (k, mol) in corpus().iter().enumerate().take(80) {
        let perm = permutation(mol.atom_count(), k as u64);
        let shuffled = mol.permuted(&perm);
        assert_eq!(fingerprint_set(mol), fingerprint_set(&shuffled), "{}", mol.source());
    }
    let benzene = parse_smiles("c1ccccc1").unwrap();
    let count = fingerprint_set(&benzene).morgan.count_ones();
    assert!(count > 0);
    assert_eq!(fingerprint_set(&benzene.permuted(&[3, 1, 5, 0, 2, 4])).morgan.count_ones(), count);
}

fn corpus_index() -> impl Strategy<Value = usize> {
    0..corpus().len()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn canonical_invariant_under_renumbering(idx in corpus_index(), seed in any::<u64>()) {
        let mol = &corpus()[idx];
        let perm = permutation(mol.atom_count(), seed);
        prop_assert_eq!(canonical_smiles(&mol.permuted(&perm)), canonical_smiles(mol));
    }

    #[test]
    fn random_spellings_parse_back_isomorphic(idx in corpus_index(), seed in any::<u64>()) {
        let mol = &corpus()[idx];
        let ranks: Vec<u32> = permutation(mol.atom_count(), seed).into_iter().map(|r| r as u32).collect();
        let text = write_smiles(mol, &ranks);
        let back = parse_smiles(&text).unwrap();
        prop_assert!(isomorphic(mol, &back), "{} -> {}", mol.source(), text);
        prop_assert_eq!(canonical_smiles(&back), canonical_smiles(mol));
    }

    #[test]
    fn formula_is_permutation_invariant(idx in corpus_index(), seed in any::<u64>()) {
        let mol = &corpus()[idx];
        let perm = permutation(mol.atom_count(), seed);
        let f = molecular_formula(mol);
        prop_assert_eq!(&molecular_formula(&mol.permuted(&perm)), &f);
        prop_assert_eq!(parse_formula(&f.to_string()).unwrap(), f);
    }

    #[test]
    fn tanimoto_properties(a in proptest::collection::btree_set(0usize..64, 0..20), b in proptest::collection::btree_set(0usize..64, 0..20)) {
        let fa = Fingerprint::from_indices(64, a.iter().copied());
        let fb = Fingerprint::from_indices(64, b.iter().copied());
        let ab = tanimoto(&fa, &fb).unwrap();
        prop_assert_eq!(ab, tanimoto(&fb, &fa).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(tanimoto(&fa, &fa).unwrap(), 1.0);
        let union = a.union(&b).count();
        let expected = if union == 0 { 1.0 } else { a.intersection(&b).count() as f64 / union as f64 };
        prop_assert_eq!(ab, expected);
    }
}

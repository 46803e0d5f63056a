use ndarray::Array2;

use crate::chem::{canonical_ranks, fingerprint_set, Element, Molecule};

const ELEMENT_TABLE: [Element; 12] = [
    Element::C,
    Element::N,
    Element::O,
    Element::S,
    Element::F,
    Element::CL,
    Element::BR,
    Element::I,
    Element::P,
    Element::B,
    Element::H,
    Element::SI,
];

/// 12 elements + other, degree 0..=5, aromatic, charge {-1, 0, +1, other}, H 0..=4.
pub const ATOM_FEATURES: usize = ELEMENT_TABLE.len() + 1 + 6 + 1 + 4 + 5;

/// One-hot atom featurization, one row per atom.
pub fn atom_features(mol: &Molecule) -> Array2<f64> {
    let mut x = Array2::zeros((mol.atom_count(), ATOM_FEATURES));
    for i in 0..mol.atom_count() {
        let atom = mol.atom(i);
        let mut col = 0;
        let element = ELEMENT_TABLE.iter().position(|&e| e == atom.element).unwrap_or(ELEMENT_TABLE.len());
        x[[i, col + element]] = 1.0;
        col += ELEMENT_TABLE.len() + 1;
        x[[i, col + mol.degree(i).min(5)]] = 1.0;
        col += 6;
        x[[i, col]] = if atom.aromatic { 1.0 } else { 0.0 };
        col += 1;
        let charge = match atom.charge {
            -1 => 0,
            0 => 1,
            1 => 2,
            _ => 3,
        };
        x[[i, col + charge]] = 1.0;
        col += 4;
        x[[i, col + (atom.hydrogens as usize).min(4)]] = 1.0;
    }
    x
}

/// Encoder input for one molecule.
#[derive(Debug, Clone, PartialEq)]
pub struct MolInput {
    pub atoms: Array2<f64>,
    pub neighbors: Vec<Vec<usize>>,
    pub fingerprint: Vec<f64>,
}

impl MolInput {
    /// Atoms are taken in canonical order with sorted neighbor lists, so
    /// every numbering of one molecule yields bit-identical inputs.
    pub fn from_molecule(mol: &Molecule) -> MolInput {
        let perm: Vec<usize> = canonical_ranks(mol).into_iter().map(|r| r as usize).collect();
        let mol = mol.permuted(&perm);
        let neighbors = (0..mol.atom_count())
            .map(|i| {
                let mut nbs: Vec<usize> = mol.neighbors(i).iter().map(|&(nb, _)| nb).collect();
                nbs.sort_unstable();
                nbs
            })
            .collect();
        MolInput { atoms: atom_features(&mol), neighbors, fingerprint: fingerprint_set(&mol).to_dense() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    #[test]
    fn rows_are_one_hot_per_group() {
        let x = atom_features(&parse_smiles("CC(=O)[O-]").unwrap());
        assert_eq!(x.ncols(), ATOM_FEATURES);
        for row in x.rows() {
            assert_eq!(row.sum(), 4.0 + row[19]);
        }
        assert_eq!(x[[3, 20]], 1.0);
    }

    #[test]
    fn renumbering_gives_identical_inputs() {
        for (a, b) in [("CCO", "OCC"), ("OC(=O)c1ccccc1", "c1ccc(cc1)C(O)=O"), ("[Na+].[Cl-]", "[Cl-].[Na+]")] {
            let (a, b) = (parse_smiles(a).unwrap(), parse_smiles(b).unwrap());
            assert_eq!(MolInput::from_molecule(&a), MolInput::from_molecule(&b));
        }
    }
}

use super::element::Element;
use super::rings;
use super::ChemError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to an atom's bond-order sum; aromatic bonds count as one.
    pub fn valence_contribution(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub element: Element,
    pub charge: i8,
    pub aromatic: bool,
    /// Attached hydrogens that are not graph nodes (implicit plus bracket-explicit).
    pub hydrogens: u8,
    pub in_ring: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    pub in_ring: bool,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

/// An attributed molecular graph. Hydrogens are folded into [`Atom::hydrogens`]
/// unless the input wrote them as explicit `[H]` atoms.
#[derive(Debug, Clone)]
pub struct Molecule {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, usize)>>,
    source: String,
}

impl Molecule {
    /// Builds a molecule from atoms and bonds, validating the graph and
    /// recomputing ring membership. Atom and bond ring flags are overwritten.
    pub fn from_parts(
        atoms: Vec<Atom>,
        bonds: Vec<(usize, usize, BondOrder)>,
        source: impl Into<String>,
    ) -> Result<Molecule, ChemError> {
        let n = atoms.len();
        let mut adjacency = vec![Vec::new(); n];
        let mut out_bonds = Vec::with_capacity(bonds.len());
        for (a, b, order) in bonds {
            if a >= n || b >= n {
                return Err(ChemError::InvalidGraph(format!("bond {a}-{b} out of range")));
            }
            if a == b {
                return Err(ChemError::InvalidGraph(format!("self-loop on atom {a}")));
            }
            if adjacency[a].iter().any(|&(nb, _)| nb == b) {
                return Err(ChemError::InvalidGraph(format!("duplicate bond {a}-{b}")));
            }
            let idx = out_bonds.len();
            adjacency[a].push((b, idx));
            adjacency[b].push((a, idx));
            out_bonds.push(Bond { a, b, order, in_ring: false });
        }
        let mut mol = Molecule { atoms, bonds: out_bonds, adjacency, source: source.into() };
        mol.refresh_ring_flags();
        for bond in &mol.bonds {
            if bond.order == BondOrder::Aromatic && !(mol.atoms[bond.a].aromatic && mol.atoms[bond.b].aromatic) {
                return Err(ChemError::InvalidGraph(format!(
                    "aromatic bond {}-{} between non-aromatic atoms",
                    bond.a, bond.b
                )));
            }
        }
        Ok(mol)
    }

    pub(crate) fn refresh_ring_flags(&mut self) {
        let ring_bonds = rings::ring_bond_flags(self);
        for (bond, flag) in self.bonds.iter_mut().zip(&ring_bonds) {
            bond.in_ring = *flag;
        }
        for atom in &mut self.atoms {
            atom.in_ring = false;
        }
        for bond in &self.bonds {
            if bond.in_ring {
                self.atoms[bond.a].in_ring = true;
                self.atoms[bond.b].in_ring = true;
            }
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom(&self, idx: usize) -> &Atom {
        &self.atoms[idx]
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// `(neighbor, bond index)` pairs for an atom.
    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency[a].iter().find(|&&(nb, _)| nb == b).map(|&(_, idx)| &self.bonds[idx])
    }

    /// Hydrogens on an atom including explicit `[H]` neighbors.
    pub fn total_hydrogens(&self, atom: usize) -> u32 {
        let explicit =
            self.adjacency[atom].iter().filter(|&&(nb, _)| self.atoms[nb].element == Element::H).count() as u32;
        self.atoms[atom].hydrogens as u32 + explicit
    }

    pub fn bond_order_sum(&self, atom: usize) -> u32 {
        self.adjacency[atom].iter().map(|&(_, b)| self.bonds[b].order.valence_contribution() as u32).sum()
    }

    pub fn has_element(&self, element: Element) -> bool {
        self.atoms.iter().any(|a| a.element == element)
    }

    /// Renumbers atoms: atom `i` of `self` becomes atom `perm[i]` of the result.
    pub fn permuted(&self, perm: &[usize]) -> Molecule {
        assert_eq!(perm.len(), self.atoms.len(), "permutation length mismatch");
        let mut atoms = vec![None; self.atoms.len()];
        for (i, atom) in self.atoms.iter().enumerate() {
            atoms[perm[i]] = Some(atom.clone());
        }
        let atoms: Vec<Atom> = atoms.into_iter().map(|a| a.expect("not a permutation")).collect();
        let bonds: Vec<_> = self.bonds.iter().map(|b| (perm[b.a], perm[b.b], b.order)).collect();
        Molecule::from_parts(atoms, bonds, self.source.clone()).expect("permutation preserves validity")
    }

    /// Induced subgraph over `selection` (any order; duplicates ignored).
    ///
    /// Atoms that lose bonds are re-saturated: neutral organic-subset atoms get
    /// their implicit hydrogens recomputed, others gain one hydrogen per lost
    /// bond order. Aromatic flags on atoms and bonds left outside any ring are
    /// cleared.
    pub fn induced_subgraph(&self, selection: &[usize]) -> Molecule {
        let mut keep: Vec<usize> = selection.to_vec();
        keep.sort_unstable();
        keep.dedup();
        let mut index = vec![usize::MAX; self.atoms.len()];
        for (new, &old) in keep.iter().enumerate() {
            index[old] = new;
        }
        let mut atoms: Vec<Atom> = keep.iter().map(|&i| self.atoms[i].clone()).collect();
        let mut bonds = Vec::new();
        let mut lost = vec![0u8; keep.len()];
        for bond in &self.bonds {
            let (na, nb) = (index[bond.a], index[bond.b]);
            match (na != usize::MAX, nb != usize::MAX) {
                (true, true) => bonds.push((na, nb, bond.order)),
                (true, false) => lost[na] += bond.order.valence_contribution(),
                (false, true) => lost[nb] += bond.order.valence_contribution(),
                _ => {}
            }
        }
        // Ring membership inside the fragment decides which aromatic flags survive.
        let probe_atoms: Vec<Atom> = atoms.iter().map(|a| Atom { aromatic: false, ..a.clone() }).collect();
        let probe_bonds: Vec<_> = bonds
            .iter()
            .map(|&(a, b, o)| (a, b, if o == BondOrder::Aromatic { BondOrder::Single } else { o }))
            .collect();
        let probe = Molecule::from_parts(probe_atoms, probe_bonds, "").expect("subgraph of a valid molecule is valid");
        for bond in bonds.iter_mut() {
            if bond.2 == BondOrder::Aromatic && probe.bond_between(bond.0, bond.1).is_some_and(|b| !b.in_ring) {
                bond.2 = BondOrder::Single;
            }
        }
        let mut dearomatized = vec![false; atoms.len()];
        for (i, atom) in atoms.iter_mut().enumerate() {
            if atom.aromatic && !probe.atoms[i].in_ring {
                atom.aromatic = false;
                dearomatized[i] = true;
            }
        }
        for (i, atom) in atoms.iter_mut().enumerate() {
            if lost[i] == 0 && !dearomatized[i] {
                continue;
            }
            let order_sum: u32 =
                bonds.iter().filter(|b| b.0 == i || b.1 == i).map(|b| b.2.valence_contribution() as u32).sum();
            atom.hydrogens = match (atom.charge, atom.element.organic_valences()) {
                (0, Some(_)) => implicit_hydrogens(atom.element, atom.aromatic, order_sum).unwrap_or(atom.hydrogens),
                _ => atom.hydrogens.saturating_add(lost[i]),
            };
        }
        let source = String::new();
        Molecule::from_parts(atoms, bonds, source).expect("subgraph of a valid molecule is valid")
    }

    /// Connected components as sorted atom index lists, ordered by first atom.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.atoms.len()];
        let mut out = Vec::new();
        for start in 0..self.atoms.len() {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut i = 0;
            while i < comp.len() {
                let v = comp[i];
                i += 1;
                for &(nb, _) in &self.adjacency[v] {
                    if !seen[nb] {
                        seen[nb] = true;
                        comp.push(nb);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub(crate) fn set_aromatic(&mut self, atoms: &[usize], bonds: &[usize]) {
        for &a in atoms {
            self.atoms[a].aromatic = true;
        }
        for &b in bonds {
            self.bonds[b].order = BondOrder::Aromatic;
        }
    }
}

/// Implicit hydrogen count for an organic-subset atom given its bond-order sum
/// (aromatic bonds counted as one). `None` when no valence accommodates the
/// bonds.
pub(crate) fn implicit_hydrogens(element: Element, aromatic: bool, order_sum: u32) -> Option<u8> {
    let valences = element.organic_valences()?;
    if aromatic {
        // One valence unit is consumed by the aromatic pi system.
        return match element.atomic_number() {
            // A fourth unit is allowed for an exocyclic double bond (aromatic c=O).
            6 => (order_sum <= 4).then(|| 3u32.saturating_sub(order_sum) as u8),
            5 | 7 | 15 => (order_sum <= 3).then(|| 2u32.saturating_sub(order_sum) as u8),
            8 | 16 => (order_sum <= 2 || (element == Element::S && order_sum <= 4)).then_some(0),
            _ => None,
        };
    }
    valences.iter().find(|&&v| v as u32 >= order_sum).map(|&v| (v as u32 - order_sum) as u8)
}

//! SMILES reading. Parsing happens in two stages: text to a raw graph that
//! still remembers how each atom and bond was written, then raw graph to
//! [`Molecule`] (implicit hydrogens, aromatic bond resolution, Kekulé
//! aromatization). Query patterns reuse the first stage.

use std::collections::BTreeMap;

use super::element::Element;
use super::molecule::{implicit_hydrogens, Atom, BondOrder, Molecule};
use super::rings;
use super::ChemError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RawAtom {
    pub element: Element,
    pub aromatic: bool,
    pub bracket: bool,
    /// Only meaningful for bracket atoms; `None` when no `H` was written.
    pub hydrogens: Option<u8>,
    pub charge: i8,
    /// `*` in query patterns; never produced for molecules.
    pub wildcard: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RawBond {
    Implicit,
    Single,
    Double,
    Triple,
    Aromatic,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct RawGraph {
    pub atoms: Vec<RawAtom>,
    pub bonds: Vec<(usize, usize, RawBond)>,
}

fn syntax(pos: usize, message: impl Into<String>) -> ChemError {
    ChemError::Syntax { pos, message: message.into() }
}

pub(crate) fn parse_raw(text: &str) -> Result<RawGraph, ChemError> {
    parse_raw_with(text, false)
}

pub(crate) fn parse_raw_with(text: &str, allow_wildcard: bool) -> Result<RawGraph, ChemError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(syntax(0, "empty SMILES"));
    }
    let bytes = text.as_bytes();
    let mut graph = RawGraph::default();
    let mut prev: Option<usize> = None;
    let mut pending: Option<(RawBond, usize)> = None;
    let mut branches: Vec<usize> = Vec::new();
    let mut open_rings: BTreeMap<u32, (usize, Option<RawBond>, usize)> = BTreeMap::new();
    let mut i = 0;

    let add_bond = |graph: &mut RawGraph, a: usize, b: usize, bond: RawBond, pos: usize| {
        if a == b {
            return Err(syntax(pos, "ring closure onto the same atom"));
        }
        if graph.bonds.iter().any(|&(x, y, _)| (x == a && y == b) || (x == b && y == a)) {
            return Err(syntax(pos, "duplicate bond"));
        }
        graph.bonds.push((a, b, bond));
        Ok(())
    };

    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            '(' => {
                let Some(p) = prev else { return Err(syntax(i, "branch without a preceding atom")) };
                if pending.is_some() {
                    return Err(syntax(i, "bond symbol before branch"));
                }
                branches.push(p);
                i += 1;
            }
            ')' => {
                if pending.is_some() {
                    return Err(syntax(i, "dangling bond at end of branch"));
                }
                let Some(p) = branches.pop() else { return Err(syntax(i, "unmatched ')'")) };
                prev = Some(p);
                i += 1;
            }
            '-' | '=' | '#' | ':' | '/' | '\\' => {
                if pending.is_some() {
                    return Err(syntax(i, "two consecutive bond symbols"));
                }
                if prev.is_none() {
                    return Err(syntax(i, "bond without a preceding atom"));
                }
                let bond = match c {
                    '-' => RawBond::Single,
                    '=' => RawBond::Double,
                    '#' => RawBond::Triple,
                    ':' => RawBond::Aromatic,
                    // Directional bonds carry stereo only; the marker is dropped.
                    _ => RawBond::Implicit,
                };
                pending = Some((bond, i));
                i += 1;
            }
            '.' => {
                if pending.is_some() {
                    return Err(syntax(i, "bond symbol before '.'"));
                }
                if prev.is_none() {
                    return Err(syntax(i, "'.' without a preceding atom"));
                }
                prev = None;
                i += 1;
            }
            '0'..='9' | '%' => {
                let start = i;
                let Some(p) = prev else { return Err(syntax(i, "ring bond without a preceding atom")) };
                let number = if c == '%' {
                    let digits = text.get(i + 1..i + 3).filter(|d| d.bytes().all(|b| b.is_ascii_digit()));
                    let Some(d) = digits else { return Err(syntax(i, "'%' must be followed by two digits")) };
                    i += 3;
                    d.parse::<u32>().unwrap()
                } else {
                    i += 1;
                    c.to_digit(10).unwrap()
                };
                let bond = pending.take().map(|(b, _)| b);
                if let Some((other, other_bond, _)) = open_rings.remove(&number) {
                    let resolved = match (other_bond, bond) {
                        (None, None) => RawBond::Implicit,
                        (Some(x), None) | (None, Some(x)) => x,
                        (Some(x), Some(y)) if x == y => x,
                        (Some(x), Some(y)) => {
                            if x == RawBond::Implicit {
                                y
                            } else if y == RawBond::Implicit {
                                x
                            } else {
                                return Err(syntax(start, "conflicting ring bond orders"));
                            }
                        }
                    };
                    add_bond(&mut graph, other, p, resolved, start)?;
                } else {
                    open_rings.insert(number, (p, bond, start));
                }
            }
            '[' => {
                let close = text[i..].find(']').map(|off| i + off).ok_or_else(|| syntax(i, "unclosed '['"))?;
                let atom = parse_bracket(&text[i + 1..close], i + 1)?;
                push_atom(&mut graph, atom, &mut prev, &mut pending, i, &add_bond)?;
                i = close + 1;
            }
            '*' if allow_wildcard => {
                let atom = RawAtom {
                    element: Element::C,
                    aromatic: false,
                    bracket: false,
                    hydrogens: None,
                    charge: 0,
                    wildcard: true,
                };
                push_atom(&mut graph, atom, &mut prev, &mut pending, i, &add_bond)?;
                i += 1;
            }
            '*' => return Err(syntax(i, "wildcard atoms are not supported")),
            _ => {
                let (atom, len) = parse_organic(text, i)?;
                push_atom(&mut graph, atom, &mut prev, &mut pending, i, &add_bond)?;
                i += len;
            }
        }
    }
    if let Some((_, pos)) = pending {
        return Err(syntax(pos, "dangling bond at end of input"));
    }
    if !branches.is_empty() {
        return Err(syntax(text.len(), "unclosed '('"));
    }
    if let Some((_, (_, _, pos))) = open_rings.into_iter().next() {
        return Err(syntax(pos, "unclosed ring bond"));
    }
    Ok(graph)
}

type BondAdder = dyn Fn(&mut RawGraph, usize, usize, RawBond, usize) -> Result<(), ChemError>;

fn push_atom(
    graph: &mut RawGraph,
    atom: RawAtom,
    prev: &mut Option<usize>,
    pending: &mut Option<(RawBond, usize)>,
    pos: usize,
    add_bond: &BondAdder,
) -> Result<(), ChemError> {
    let idx = graph.atoms.len();
    graph.atoms.push(atom);
    if let Some(p) = *prev {
        let bond = pending.take().map(|(b, _)| b).unwrap_or(RawBond::Implicit);
        add_bond(graph, p, idx, bond, pos)?;
    } else if pending.is_some() {
        return Err(syntax(pos, "bond without a preceding atom"));
    }
    *prev = Some(idx);
    Ok(())
}

fn parse_organic(text: &str, i: usize) -> Result<(RawAtom, usize), ChemError> {
    let rest = &text[i..];
    let (symbol, aromatic, len) = if rest.starts_with("Cl") {
        ("Cl", false, 2)
    } else if rest.starts_with("Br") {
        ("Br", false, 2)
    } else {
        match rest.as_bytes()[0] {
            b'B' => ("B", false, 1),
            b'C' => ("C", false, 1),
            b'N' => ("N", false, 1),
            b'O' => ("O", false, 1),
            b'P' => ("P", false, 1),
            b'S' => ("S", false, 1),
            b'F' => ("F", false, 1),
            b'I' => ("I", false, 1),
            b'b' => ("B", true, 1),
            b'c' => ("C", true, 1),
            b'n' => ("N", true, 1),
            b'o' => ("O", true, 1),
            b'p' => ("P", true, 1),
            b's' => ("S", true, 1),
            _ => {
                let ch = rest.chars().next().unwrap();
                return Err(syntax(i, format!("unexpected character '{ch}'")));
            }
        }
    };
    let element = Element::from_symbol(symbol).unwrap();
    Ok((RawAtom { element, aromatic, bracket: false, hydrogens: None, charge: 0, wildcard: false }, len))
}

fn parse_bracket(body: &str, offset: usize) -> Result<RawAtom, ChemError> {
    let b = body.as_bytes();
    let mut i = 0;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1; // isotope, ignored
    }
    let sym_start = i;
    if i >= b.len() || !b[i].is_ascii_alphabetic() {
        return Err(syntax(offset + i, "missing element symbol in bracket atom"));
    }
    let (element, aromatic) = if b[i].is_ascii_lowercase() {
        let two = body.get(i..i + 2).filter(|s| matches!(*s, "se" | "as" | "te"));
        let sym = match two {
            Some(s) => s,
            None => &body[i..i + 1],
        };
        i += sym.len();
        let mut chars = sym.chars();
        let cap: String = chars.next().unwrap().to_ascii_uppercase().to_string() + chars.as_str();
        let element = Element::from_symbol(&cap)
            .filter(|e| e.can_be_aromatic())
            .ok_or_else(|| syntax(offset + sym_start, format!("invalid aromatic symbol '{sym}'")))?;
        (element, true)
    } else {
        let two = body.get(i..i + 2).filter(|s| s.as_bytes()[1].is_ascii_lowercase()).and_then(Element::from_symbol);
        match two {
            Some(e) => {
                i += 2;
                (e, false)
            }
            None => {
                let e = Element::from_symbol(&body[i..i + 1])
                    .ok_or_else(|| syntax(offset + i, format!("unknown element '{}'", &body[i..i + 1])))?;
                i += 1;
                (e, false)
            }
        }
    };
    // Chirality markers are accepted and dropped.
    if i < b.len() && b[i] == b'@' {
        while i < b.len() && b[i] == b'@' {
            i += 1;
        }
        let class = body.get(i..i + 2).filter(|c| matches!(*c, "TH" | "AL" | "SP" | "TB" | "OH"));
        if class.is_some() {
            i += 2;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    let mut hydrogens = None;
    if i < b.len() && b[i] == b'H' {
        i += 1;
        let start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        let n = if start == i {
            1
        } else {
            body[start..i].parse::<u8>().map_err(|_| syntax(offset + start, "bad H count"))?
        };
        hydrogens = Some(n);
    }
    let mut charge: i32 = 0;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        let sign = if b[i] == b'+' { 1 } else { -1 };
        let symbol = b[i];
        i += 1;
        let start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if start != i {
            charge = sign * body[start..i].parse::<i32>().map_err(|_| syntax(offset + start, "bad charge"))?;
        } else {
            let mut count = 1;
            while i < b.len() && b[i] == symbol {
                count += 1;
                i += 1;
            }
            charge = sign * count;
        }
    }
    if i < b.len() && b[i] == b':' {
        i += 1;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1; // atom class, ignored
        }
    }
    if i != b.len() {
        return Err(syntax(offset + i, format!("unexpected '{}' in bracket atom", &body[i..])));
    }
    let charge = i8::try_from(charge).map_err(|_| syntax(offset, "charge out of range"))?;
    Ok(RawAtom { element, aromatic, bracket: true, hydrogens, charge, wildcard: false })
}

/// Parses a SMILES string into a [`Molecule`].
pub fn parse_smiles(text: &str) -> Result<Molecule, ChemError> {
    let raw = parse_raw(text)?;
    build_molecule(&raw, text.trim())
}

fn build_molecule(raw: &RawGraph, source: &str) -> Result<Molecule, ChemError> {
    let mut atoms: Vec<Atom> = raw
        .atoms
        .iter()
        .map(|a| Atom {
            element: a.element,
            charge: a.charge,
            aromatic: a.aromatic,
            hydrogens: a.hydrogens.unwrap_or(0),
            in_ring: false,
        })
        .collect();
    let mut bonds = Vec::with_capacity(raw.bonds.len());
    for &(a, b, bond) in &raw.bonds {
        let both_aromatic = raw.atoms[a].aromatic && raw.atoms[b].aromatic;
        let order = match bond {
            RawBond::Implicit if both_aromatic => BondOrder::Aromatic,
            RawBond::Implicit | RawBond::Single => BondOrder::Single,
            RawBond::Double => BondOrder::Double,
            RawBond::Triple => BondOrder::Triple,
            RawBond::Aromatic if both_aromatic => BondOrder::Aromatic,
            RawBond::Aromatic => {
                return Err(ChemError::Syntax {
                    pos: 0,
                    message: format!("aromatic bond {a}-{b} between non-aromatic atoms"),
                })
            }
        };
        bonds.push((a, b, order));
    }
    let mut mol = Molecule::from_parts(atoms.clone(), bonds.clone(), source)?;

    // Aromatic bonds that are not ring bonds are single (e.g. biaryl links).
    let mut changed = false;
    for (i, bond) in mol.bonds().iter().enumerate() {
        if bond.order == BondOrder::Aromatic && !bond.in_ring {
            bonds[i].2 = BondOrder::Single;
            changed = true;
        }
    }
    for (i, atom) in mol.atoms().iter().enumerate() {
        if atom.aromatic && !atom.in_ring {
            return Err(ChemError::Syntax { pos: 0, message: format!("aromatic atom {i} is not in a ring") });
        }
    }
    if changed {
        mol = Molecule::from_parts(atoms.clone(), bonds.clone(), source)?;
    }

    let mut needs_rebuild = false;
    for (i, raw_atom) in raw.atoms.iter().enumerate() {
        if raw_atom.bracket {
            continue;
        }
        let order_sum = mol.bond_order_sum(i);
        let h = implicit_hydrogens(raw_atom.element, raw_atom.aromatic, order_sum).ok_or_else(|| {
            ChemError::Valence { atom: i, symbol: raw_atom.element.symbol().to_string(), bond_order_sum: order_sum }
        })?;
        if h != 0 {
            atoms[i].hydrogens = h;
            needs_rebuild = true;
        }
    }
    if needs_rebuild {
        mol = Molecule::from_parts(atoms, bonds, source)?;
    }
    aromatize(&mut mol);
    Ok(mol)
}

/// Marks Kekulé 5- and 6-membered rings of neutral C/N/O/S as aromatic when
/// they carry six pi electrons.
fn aromatize(mol: &mut Molecule) {
    let rings = rings::sssr(mol);
    let mut flagged_atoms = Vec::new();
    let mut flagged_bonds = Vec::new();
    for ring in &rings {
        if !(ring.len() == 5 || ring.len() == 6) {
            continue;
        }
        if ring.iter().all(|&a| mol.atom(a).aromatic) {
            continue;
        }
        let electrons: Option<u32> = ring.iter().map(|&a| pi_electrons(mol, a)).sum();
        if electrons != Some(6) {
            continue;
        }
        flagged_atoms.extend(ring.iter().copied());
        for k in 0..ring.len() {
            let (a, b) = (ring[k], ring[(k + 1) % ring.len()]);
            let idx = mol.neighbors(a).iter().find(|&&(nb, _)| nb == b).map(|&(_, i)| i).unwrap();
            flagged_bonds.push(idx);
        }
    }
    if !flagged_atoms.is_empty() {
        mol.set_aromatic(&flagged_atoms, &flagged_bonds);
    }
}

fn pi_electrons(mol: &Molecule, atom: usize) -> Option<u32> {
    let a = mol.atom(atom);
    if a.charge != 0 || !matches!(a.element.atomic_number(), 6 | 7 | 8 | 16) {
        return None;
    }
    let z = a.element.atomic_number();
    let lone_pair_donor = match z {
        7 => mol.bond_order_sum(atom) + a.hydrogens as u32 == 3,
        8 | 16 => true,
        _ => false,
    };
    if a.aromatic {
        return Some(if lone_pair_donor { 2 } else { 1 });
    }
    let mut ring_double = 0;
    for &(_, b) in mol.neighbors(atom) {
        let bond = &mol.bonds()[b];
        match bond.order {
            BondOrder::Double if bond.in_ring => ring_double += 1,
            BondOrder::Double | BondOrder::Triple | BondOrder::Aromatic => return None,
            BondOrder::Single => {}
        }
    }
    match ring_double {
        1 if z == 6 || z == 7 => Some(1),
        0 if lone_pair_donor && mol.bond_order_sum(atom) + a.hydrogens as u32 <= 3 => Some(2),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h_total(mol: &Molecule) -> u32 {
        (0..mol.atom_count()).map(|i| mol.total_hydrogens(i)).sum()
    }

    #[test]
    fn anhydride_from_worked_example() {
        let mol = parse_smiles("CCC(=O)OC(=O)CC").unwrap();
        assert_eq!(mol.atom_count(), 9);
        assert_eq!(mol.atoms().iter().filter(|a| a.element == Element::C).count(), 6);
        assert_eq!(mol.atoms().iter().filter(|a| a.element == Element::O).count(), 3);
        assert_eq!(h_total(&mol), 10);
    }

    #[test]
    fn methane_and_benzene() {
        let m = parse_smiles("C").unwrap();
        assert_eq!(m.atom_count(), 1);
        assert_eq!(m.atom(0).hydrogens, 4);

        let b = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(b.atom_count(), 6);
        assert!(b.atoms().iter().all(|a| a.aromatic && a.in_ring && a.hydrogens == 1));
        assert_eq!(rings::sssr(&b).len(), 1);
    }

    #[test]
    fn kekule_rings_are_aromatized() {
        for s in ["C1=CC=CC=C1", "C1=CC=CS1", "C1=CC=CN1", "C1=CC=NC=C1", "C1=CC=C2C=CC=CC2=C1", "C1=CC=C2NC=CC2=C1"] {
            let m = parse_smiles(s).unwrap();
            assert!(m.atoms().iter().all(|a| a.aromatic), "{s} not aromatized");
        }
        for s in ["C1=CCC=CC1", "O=C1C=CC(=O)C=C1", "C1=CCCC1"] {
            let m = parse_smiles(s).unwrap();
            assert!(m.atoms().iter().all(|a| !a.aromatic), "{s} wrongly aromatized");
        }
        let pyrrole = parse_smiles("C1=CC=CN1").unwrap();
        let n = pyrrole.atoms().iter().find(|a| a.element == Element::N).unwrap();
        assert_eq!(n.hydrogens, 1);
    }

    #[test]
    fn bracket_atoms() {
        let m = parse_smiles("[NH4+]").unwrap();
        assert_eq!(m.atom(0).hydrogens, 4);
        assert_eq!(m.atom(0).charge, 1);
        let m = parse_smiles("[13CH3][O-]").unwrap();
        assert_eq!(m.atom(0).hydrogens, 3);
        assert_eq!(m.atom(1).charge, -1);
        let m = parse_smiles("[Fe+++]").unwrap();
        assert_eq!(m.atom(0).charge, 3);
        let m = parse_smiles("C[C@@H](N)C(=O)O").unwrap();
        assert_eq!(m.atom(1).hydrogens, 1);
        let m = parse_smiles("c1cc[nH]c1").unwrap();
        assert_eq!(m.atom(3).hydrogens, 1);
        let m = parse_smiles("[Na+].[Cl-]").unwrap();
        assert_eq!(m.bond_count(), 0);
    }

    #[test]
    fn ring_closures_and_stereo() {
        let m = parse_smiles("C%10CCCCC%10").unwrap();
        assert_eq!(rings::sssr(&m).len(), 1);
        let m = parse_smiles("F/C=C/F").unwrap();
        assert_eq!(m.bond_count(), 3);
        let m = parse_smiles("C1CC=1").unwrap();
        assert!(m.bonds().iter().any(|b| b.order == BondOrder::Double));
        let m = parse_smiles("c1ccccc1-c1ccccc1").unwrap();
        assert_eq!(m.bonds().iter().filter(|b| b.order == BondOrder::Single).count(), 1);
        let m = parse_smiles("c1ccccc1c1ccccc1").unwrap();
        assert_eq!(m.bonds().iter().filter(|b| b.order == BondOrder::Single).count(), 1);
    }

    #[test]
    fn syntax_errors() {
        for s in ["", "C(", "C)", "C1CC", "C=", "(C)", "C((C))x", "[Xx]", "C==C", "c1cccc", "CcC", "C11", "[CH4"] {
            assert!(matches!(parse_smiles(s), Err(ChemError::Syntax { .. })), "{s:?} should be a syntax error");
        }
    }

    #[test]
    fn valence_errors() {
        assert!(matches!(parse_smiles("C(C)(C)(C)(C)C"), Err(ChemError::Valence { .. })));
        assert!(matches!(parse_smiles("FF=C"), Err(ChemError::Valence { .. })));
    }
}

//! Fingerprints: a radius-2 circular (Morgan-style) fingerprint, a linear
//! path fingerprint, and a table of 167 structural keys. Concatenated they
//! form the 2215-bit molecule descriptor.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::molecule::Molecule;
use super::pattern::Pattern;
use super::ChemError;

pub const MORGAN_BITS: usize = 1024;
pub const PATH_BITS: usize = 1024;
pub const KEY_BITS: usize = 167;
pub const FINGERPRINT_BITS: usize = MORGAN_BITS + PATH_BITS + KEY_BITS;

const MORGAN_RADIUS: usize = 2;
const MAX_PATH_BONDS: usize = 7;

const KEY_TABLE: &str = include_str!("../../data/structural_keys.tsv");
const KEY_TABLE_HEADER: &str = "# kmse structural keys v1";

/// Fixed-length bit set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fingerprint {
    len: usize,
    words: Vec<u64>,
}

impl Fingerprint {
    pub fn new(len: usize) -> Fingerprint {
        Fingerprint { len, words: vec![0; len.div_ceil(64)] }
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Fingerprint {
        let mut fp = Fingerprint::new(len);
        for i in indices {
            fp.set(i);
        }
        fp
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set(&mut self, bit: usize) {
        assert!(bit < self.len, "bit {bit} out of range {}", self.len);
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, bit: usize) -> bool {
        bit < self.len && self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.get(i))
    }
}

/// |a ∩ b| / |a ∪ b|, and 1.0 when both sets are empty.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, ChemError> {
    if a.len != b.len {
        return Err(ChemError::LengthMismatch { left: a.len, right: b.len });
    }
    let (mut inter, mut union) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        inter += (x & y).count_ones();
        union += (x | y).count_ones();
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerprintSet {
    pub morgan: Fingerprint,
    pub path: Fingerprint,
    pub keys: Fingerprint,
}

impl FingerprintSet {
    /// The three sets concatenated as 0/1 values (morgan, path, keys).
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(FINGERPRINT_BITS);
        for fp in [&self.morgan, &self.path, &self.keys] {
            out.extend((0..fp.len()).map(|i| if fp.get(i) { 1.0 } else { 0.0 }));
        }
        out
    }
}

pub fn fingerprint_set(mol: &Molecule) -> FingerprintSet {
    FingerprintSet { morgan: morgan_fingerprint(mol), path: path_fingerprint(mol), keys: keys_fingerprint(mol) }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Fnv {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.write(&v.to_le_bytes());
    }
}

fn atom_invariant(mol: &Molecule, i: usize) -> u64 {
    let a = mol.atom(i);
    let mut h = Fnv::new();
    h.write(&[
        a.element.atomic_number(),
        mol.degree(i) as u8,
        mol.total_hydrogens(i) as u8,
        a.charge as u8,
        a.in_ring as u8,
        a.aromatic as u8,
    ]);
    h.0
}

pub fn morgan_fingerprint(mol: &Molecule) -> Fingerprint {
    let mut fp = Fingerprint::new(MORGAN_BITS);
    let mut ids: Vec<u64> = (0..mol.atom_count()).map(|i| atom_invariant(mol, i)).collect();
    for &id in &ids {
        fp.set((id % MORGAN_BITS as u64) as usize);
    }
    for radius in 1..=MORGAN_RADIUS {
        let next: Vec<u64> = (0..mol.atom_count())
            .map(|i| {
                let mut env: Vec<(u8, u64)> =
                    mol.neighbors(i).iter().map(|&(nb, b)| (mol.bonds()[b].order.code(), ids[nb])).collect();
                env.sort_unstable();
                let mut h = Fnv::new();
                h.write_u64(radius as u64);
                h.write_u64(ids[i]);
                for (code, id) in env {
                    h.write(&[code]);
                    h.write_u64(id);
                }
                h.0
            })
            .collect();
        for &id in &next {
            fp.set((id % MORGAN_BITS as u64) as usize);
        }
        ids = next;
    }
    fp
}

fn path_atom_code(mol: &Molecule, i: usize) -> u64 {
    let a = mol.atom(i);
    a.element.atomic_number() as u64 | (a.aromatic as u64) << 8
}

/// Hash of every simple path of 1 to 7 bonds; direction-independent.
pub fn path_fingerprint(mol: &Molecule) -> Fingerprint {
    let mut fp = Fingerprint::new(PATH_BITS);
    let mut path = Vec::with_capacity(MAX_PATH_BONDS + 1);
    let mut bonds = Vec::with_capacity(MAX_PATH_BONDS);
    let mut on_path = vec![false; mol.atom_count()];
    for start in 0..mol.atom_count() {
        path.push(start);
        on_path[start] = true;
        walk(mol, &mut path, &mut bonds, &mut on_path, &mut fp);
        on_path[start] = false;
        path.pop();
    }
    fp
}

fn walk(mol: &Molecule, path: &mut Vec<usize>, bonds: &mut Vec<u8>, on_path: &mut [bool], fp: &mut Fingerprint) {
    if !bonds.is_empty() {
        fp.set((path_key(mol, path, bonds) % PATH_BITS as u64) as usize);
    }
    if bonds.len() == MAX_PATH_BONDS {
        return;
    }
    let last = *path.last().unwrap();
    for &(nb, b) in mol.neighbors(last) {
        if on_path[nb] {
            continue;
        }
        on_path[nb] = true;
        path.push(nb);
        bonds.push(mol.bonds()[b].order.code());
        walk(mol, path, bonds, on_path, fp);
        bonds.pop();
        path.pop();
        on_path[nb] = false;
    }
}

fn path_key(mol: &Molecule, path: &[usize], bonds: &[u8]) -> u64 {
    let forward: Vec<u64> = interleave(path.iter().map(|&a| path_atom_code(mol, a)), bonds.iter().copied());
    let backward: Vec<u64> =
        interleave(path.iter().rev().map(|&a| path_atom_code(mol, a)), bonds.iter().rev().copied());
    let key = forward.min(backward);
    let mut h = Fnv::new();
    for v in key {
        h.write_u64(v);
    }
    h.0
}

fn interleave(atoms: impl Iterator<Item = u64>, bonds: impl Iterator<Item = u8>) -> Vec<u64> {
    let mut out = Vec::new();
    let mut bonds = bonds;
    for a in atoms {
        out.push(a);
        if let Some(b) = bonds.next() {
            out.push(1000 + b as u64);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct StructuralKey {
    pub index: usize,
    pub name: String,
    pub pattern: Pattern,
}

/// Parses a key table: a version header line, optional `#` comments, then
/// `index<TAB>name<TAB>pattern` lines with consecutive indices from 0.
pub fn parse_key_table(text: &str) -> Result<Vec<StructuralKey>, ChemError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim() == KEY_TABLE_HEADER => {}
        _ => return Err(ChemError::PatternTable { line: 1, message: format!("missing header '{KEY_TABLE_HEADER}'") }),
    }
    let mut keys = Vec::new();
    for (no, line) in lines {
        let table_error = |message: String| ChemError::PatternTable { line: no + 1, message };
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [index, name, pattern] = fields[..] else {
            return Err(table_error("expected three tab-separated fields".into()));
        };
        let index: usize = index.parse().map_err(|_| table_error(format!("bad index '{index}'")))?;
        if index != keys.len() {
            return Err(table_error(format!("index {index} out of sequence")));
        }
        let pattern = Pattern::parse(pattern).map_err(|e| table_error(e.to_string()))?;
        keys.push(StructuralKey { index, name: name.to_string(), pattern });
    }
    Ok(keys)
}

/// The bundled key table.
pub fn structural_keys() -> &'static [StructuralKey] {
    static KEYS: OnceLock<Vec<StructuralKey>> = OnceLock::new();
    KEYS.get_or_init(|| {
        let keys = parse_key_table(KEY_TABLE).expect("bundled key table is valid");
        assert_eq!(keys.len(), KEY_BITS, "bundled key table size");
        keys
    })
}

pub fn keys_fingerprint(mol: &Molecule) -> Fingerprint {
    let keys = structural_keys();
    Fingerprint::from_indices(KEY_BITS, keys.iter().filter(|k| k.pattern.matches(mol)).map(|k| k.index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn key_index(name: &str) -> usize {
        structural_keys().iter().find(|k| k.name == name).unwrap().index
    }

    #[test]
    fn tanimoto_fixtures() {
        let a = Fingerprint::from_indices(8, [1, 2, 3]);
        let b = Fingerprint::from_indices(8, [2, 3, 4]);
        assert_eq!(tanimoto(&a, &b).unwrap(), 0.5);
        assert_eq!(tanimoto(&a, &a).unwrap(), 1.0);
        let c = Fingerprint::from_indices(8, [5, 6]);
        assert_eq!(tanimoto(&a, &c).unwrap(), 0.0);
        assert_eq!(tanimoto(&Fingerprint::new(8), &Fingerprint::new(8)).unwrap(), 1.0);
        assert!(matches!(tanimoto(&a, &Fingerprint::new(9)), Err(ChemError::LengthMismatch { .. })));
    }

    #[test]
    fn key_table_loads() {
        assert_eq!(structural_keys().len(), KEY_BITS);
        assert_eq!(FINGERPRINT_BITS, 2215);
    }

    #[test]
    fn key_semantics() {
        let keys = keys_fingerprint(&parse_smiles("C").unwrap());
        assert!(keys.get(key_index("has_carbon")));
        assert!(!keys.get(key_index("has_nitrogen")));
        let keys = keys_fingerprint(&parse_smiles("CC(=O)OC").unwrap());
        assert!(keys.get(key_index("ester")));
        assert!(!keys.get(key_index("carboxylic_acid")));
    }

    #[test]
    fn spellings_give_same_set() {
        let a = fingerprint_set(&parse_smiles("CCO").unwrap());
        let b = fingerprint_set(&parse_smiles("OCC").unwrap());
        assert_eq!(a, b);
        assert_eq!(a.to_dense().len(), FINGERPRINT_BITS);
    }

    #[test]
    fn rejects_malformed_tables() {
        assert!(parse_key_table("0\tx\tC").is_err());
        assert!(parse_key_table(&format!("{KEY_TABLE_HEADER}\n1\tx\tC")).is_err());
        assert!(parse_key_table(&format!("{KEY_TABLE_HEADER}\n0\tx\tC(")).is_err());
    }
}

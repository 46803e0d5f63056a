//! Additive-increment NMR predictor. Each carbon gets a base shift for its
//! environment (sp3, alkene, aromatic, carbonyl, nitrile, ...) plus tabulated
//! substituent increments; protons follow their attached atom. Symmetry-
//! equivalent atoms share one peak. The model is self-consistent, not
//! quantitatively accurate.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CarbonPeak, HydrogenPeak, NmrSpectrum, SpectraError};
use crate::chem::{canonical_ranks, rings, symmetry_classes, BondOrder, Element, Molecule};

const C_JITTER: f64 = 0.5;
const H_JITTER: f64 = 0.03;
const J_JITTER: f64 = 0.3;

pub fn simulate_nmr(mol: &Molecule, seed: u64) -> Result<NmrSpectrum, SpectraError> {
    if !mol.has_element(Element::C) {
        return Err(SpectraError::NoCarbon);
    }
    let env = Env::new(mol);
    let classes = symmetry_classes(mol);
    let ranks = canonical_ranks(mol);
    // Groups of equivalent atoms, visited in canonical order so draws are
    // independent of input numbering.
    let mut groups: BTreeMap<u32, (u32, Vec<usize>)> = BTreeMap::new();
    for i in 0..mol.atom_count() {
        let entry = groups.entry(classes[i]).or_insert((u32::MAX, Vec::new()));
        entry.0 = entry.0.min(ranks[i]);
        entry.1.push(i);
    }
    let mut ordered: Vec<(u32, u32, Vec<usize>)> = groups.into_iter().map(|(c, (r, atoms))| (r, c, atoms)).collect();
    ordered.sort_by_key(|g| g.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spectrum = NmrSpectrum::default();
    for (_, class, atoms) in &ordered {
        let rep = atoms[0];
        let atom = mol.atom(rep);
        let hydrogens: u32 = atoms.iter().map(|&a| mol.atom(a).hydrogens as u32).sum();
        if atom.element == Element::C {
            let shift = round_to(env.carbon_shift(rep) + rng.random_range(-C_JITTER..=C_JITTER), 1);
            spectrum.carbon.push(CarbonPeak { shift, count: atoms.len() as u32, pattern: "s".into() });
            if hydrogens > 0 {
                let shift = round_to(env.proton_shift(rep) + rng.random_range(-H_JITTER..=H_JITTER), 2);
                let neighbors_h: u32 = mol
                    .neighbors(rep)
                    .iter()
                    .filter(|&&(nb, _)| mol.atom(nb).element == Element::C && classes[nb] != *class)
                    .map(|&(nb, _)| mol.atom(nb).hydrogens as u32)
                    .sum();
                let pattern = match neighbors_h {
                    0 => "s",
                    1 => "d",
                    2 => "t",
                    3 => "q",
                    _ => "m",
                };
                let jitter = rng.random_range(-J_JITTER..=J_JITTER);
                let coupling = matches!(pattern, "d" | "t" | "q").then(|| round_to(env.coupling(rep) + jitter, 1));
                spectrum.hydrogen.push(HydrogenPeak { shift, count: hydrogens, pattern: pattern.into(), coupling });
            }
        } else if hydrogens > 0 {
            let shift = round_to(env.heteroatom_proton_shift(rep) + rng.random_range(-H_JITTER..=H_JITTER), 2);
            spectrum.hydrogen.push(HydrogenPeak { shift, count: hydrogens, pattern: "br s".into(), coupling: None });
        }
    }
    spectrum.carbon.sort_by(|a, b| a.shift.total_cmp(&b.shift));
    spectrum.hydrogen.sort_by(|a, b| a.shift.total_cmp(&b.shift));
    Ok(spectrum)
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    let r = (x * f).round() / f;
    // Avoid "-0.0" in serialized text.
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

struct Env<'a> {
    mol: &'a Molecule,
    ring_size: Vec<usize>,
}

impl<'a> Env<'a> {
    fn new(mol: &'a Molecule) -> Env<'a> {
        Env { mol, ring_size: rings::smallest_ring_sizes(mol) }
    }

    fn z(&self, i: usize) -> u8 {
        self.mol.atom(i).element.atomic_number()
    }

    fn bonded(&self, i: usize) -> impl Iterator<Item = (usize, BondOrder)> + '_ {
        self.mol.neighbors(i).iter().map(move |&(nb, b)| (nb, self.mol.bonds()[b].order))
    }

    fn has_double_to(&self, i: usize, z: u8) -> bool {
        self.bonded(i).any(|(nb, o)| o == BondOrder::Double && self.z(nb) == z)
    }

    fn is_carbonyl(&self, i: usize) -> bool {
        self.z(i) == 6 && !self.mol.atom(i).aromatic && self.has_double_to(i, 8)
    }

    fn is_sp3(&self, i: usize) -> bool {
        !self.mol.atom(i).aromatic && self.bonded(i).all(|(_, o)| o == BondOrder::Single)
    }

    fn is_unsaturated_carbon(&self, i: usize) -> bool {
        self.z(i) == 6
            && (self.mol.atom(i).aromatic || self.bonded(i).any(|(nb, o)| o == BondOrder::Double && self.z(nb) == 6))
    }

    fn is_nitro_n(&self, i: usize) -> bool {
        self.z(i) == 7 && self.mol.atom(i).charge == 1 && self.has_double_to(i, 8)
    }

    /// Oxygen or nitrogen bonded to a carbonyl carbon.
    fn acylated(&self, i: usize) -> bool {
        self.bonded(i).any(|(nb, _)| self.is_carbonyl(nb))
    }

    fn carbon_shift(&self, i: usize) -> f64 {
        let atom = self.mol.atom(i);
        if atom.aromatic {
            return self.aromatic_carbon(i);
        }
        let doubles_c = self.bonded(i).filter(|&(nb, o)| o == BondOrder::Double && self.z(nb) == 6).count();
        let doubles_o = self.bonded(i).filter(|&(nb, o)| o == BondOrder::Double && self.z(nb) == 8).count();
        if doubles_o == 2 {
            return 125.0;
        }
        if doubles_o == 1 && self.has_double_to(i, 7) {
            return 122.0;
        }
        if doubles_o == 1 {
            return self.carbonyl_carbon(i);
        }
        if self.has_double_to(i, 16) {
            return 200.0;
        }
        if self.bonded(i).any(|(nb, o)| o == BondOrder::Triple && self.z(nb) == 7) {
            return 118.0;
        }
        if self.bonded(i).any(|(nb, o)| o == BondOrder::Triple && self.z(nb) == 6) {
            return if atom.hydrogens > 0 { 68.0 } else { 80.0 };
        }
        if self.has_double_to(i, 7) {
            return 160.0;
        }
        if doubles_c == 2 {
            return 210.0;
        }
        if doubles_c == 1 {
            return self.alkene_carbon(i);
        }
        self.sp3_carbon(i)
    }

    fn carbonyl_carbon(&self, i: usize) -> f64 {
        let mut oxy = 0;
        let mut nitro = 0;
        let mut halo = 0;
        let mut acid = false;
        let mut anhydride = false;
        let mut conjugated = false;
        for (nb, o) in self.bonded(i) {
            if o != BondOrder::Single && o != BondOrder::Aromatic {
                continue;
            }
            match self.z(nb) {
                8 => {
                    oxy += 1;
                    acid |= self.mol.atom(nb).hydrogens > 0 || self.mol.atom(nb).charge < 0;
                    anhydride |= self.bonded(nb).any(|(x, _)| x != i && self.is_carbonyl(x));
                }
                7 => nitro += 1,
                9 | 17 | 35 | 53 => halo += 1,
                6 => conjugated |= self.is_unsaturated_carbon(nb),
                _ => {}
            }
        }
        let h = self.mol.atom(i).hydrogens;
        let conj = if conjugated { -7.0 } else { 0.0 };
        let ring = match self.ring_size[i] {
            5 => 8.0,
            6 => 4.0,
            _ => 0.0,
        };
        if oxy + nitro >= 2 {
            return if nitro >= 2 {
                158.0
            } else if oxy >= 2 {
                155.0
            } else {
                156.0
            };
        }
        if nitro == 1 {
            return 170.0 + conj;
        }
        if oxy == 1 {
            if h > 0 {
                return 161.0;
            }
            let base = if acid {
                178.0
            } else if anhydride {
                170.0
            } else {
                172.0
            };
            return base + conj;
        }
        if halo > 0 {
            return 170.0;
        }
        if h > 0 {
            return 200.0 + conj;
        }
        206.0 + conj + ring
    }

    fn alkene_carbon(&self, i: usize) -> f64 {
        let partner = self
            .bonded(i)
            .find(|&(nb, o)| o == BondOrder::Double && self.z(nb) == 6)
            .map(|(nb, _)| nb)
            .expect("alkene carbon has a C=C partner");
        let own = |z: u8, carbonyl: bool| match (z, carbonyl) {
            (6, true) => 14.0,
            (6, false) => 10.6,
            (8, _) => 29.0,
            (7, _) => 15.0,
            (17, _) => 3.0,
            (35, _) => -8.0,
            (9, _) => 25.0,
            _ => 0.0,
        };
        let far = |z: u8, carbonyl: bool| match (z, carbonyl) {
            (6, true) => 6.0,
            (6, false) => -7.9,
            (8, _) => -39.0,
            (7, _) => -20.0,
            (17, _) => -6.0,
            (35, _) => -1.0,
            (9, _) => -34.0,
            _ => 0.0,
        };
        let mut shift = 123.3;
        for (nb, _) in self.bonded(i).filter(|&(nb, _)| nb != partner) {
            shift += own(self.z(nb), self.is_carbonyl(nb));
        }
        for (nb, _) in self.bonded(partner).filter(|&(nb, _)| nb != i) {
            shift += far(self.z(nb), self.is_carbonyl(nb));
        }
        shift
    }

    fn sp3_carbon(&self, i: usize) -> f64 {
        let mut shift = -2.3;
        for (a, _) in self.bonded(i) {
            match self.z(a) {
                6 => {
                    shift += 9.1;
                    if self.is_carbonyl(a) {
                        shift += 13.0;
                    }
                }
                8 => shift += if self.mol.atom(a).hydrogens > 0 { 49.0 } else { 58.0 },
                7 => shift += 28.3,
                9 => shift += 68.0,
                16 => shift += 11.0,
                17 => shift += 31.0,
                35 => shift += 20.0,
                53 => shift += -6.0,
                _ => shift += 10.0,
            }
            for (b, _) in self.bonded(a).filter(|&(b, _)| b != i) {
                match self.z(b) {
                    6 => shift += 9.4,
                    // Heteroatom beta effects only through saturated centres.
                    8 | 7 | 17 | 35 | 16 if self.is_sp3(a) => shift += 10.0,
                    9 if self.is_sp3(a) => shift += 8.0,
                    _ => {}
                }
                for (c, _) in self.bonded(b).filter(|&(c, _)| c != a && c != i) {
                    if self.z(c) == 6 {
                        shift -= 2.5;
                    }
                }
            }
        }
        shift
    }

    /// Increment of a ring substituent on its ipso carbon and on ortho carbons.
    fn substituent_increments(&self, sub: usize) -> (f64, f64) {
        match self.z(sub) {
            6 if self.is_carbonyl(sub) => (9.0, 1.0),
            6 if self.bonded(sub).any(|(_, o)| o == BondOrder::Triple) => (-16.0, 3.6),
            6 if self.is_unsaturated_carbon(sub) => (13.0, -1.1),
            6 => (9.3, 0.7),
            8 => (26.9, -12.7),
            7 if self.is_nitro_n(sub) => (19.9, -4.8),
            7 => (18.2, -13.3),
            9 => (34.8, -12.9),
            16 => (10.0, -1.9),
            17 => (6.2, 0.4),
            35 => (-5.5, 3.4),
            53 => (-34.0, 8.9),
            _ => (0.0, 0.0),
        }
    }

    fn ring_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.bonded(i).filter(|&(_, o)| o == BondOrder::Aromatic).map(|(nb, _)| nb)
    }

    fn exocyclic(&self, i: usize) -> impl Iterator<Item = (usize, BondOrder)> + '_ {
        self.bonded(i).filter(|&(_, o)| o != BondOrder::Aromatic)
    }

    fn aromatic_carbon(&self, i: usize) -> f64 {
        let mut shift = 128.5;
        let mut next_to_hetero = false;
        for nb in self.ring_neighbors(i) {
            match self.z(nb) {
                7 if self.mol.atom(nb).hydrogens > 0 => shift -= 10.0,
                7 => shift += 21.5,
                8 => shift += 14.0,
                16 => shift -= 3.5,
                _ => continue,
            }
            next_to_hetero = true;
        }
        if self.ring_size[i] == 5 && !next_to_hetero {
            shift -= 18.0;
        }
        for (sub, order) in self.exocyclic(i) {
            if order == BondOrder::Double && self.z(sub) == 8 {
                shift += 32.0;
                continue;
            }
            shift += self.substituent_increments(sub).0;
        }
        for nb in self.ring_neighbors(i) {
            for (sub, order) in self.exocyclic(nb) {
                if order == BondOrder::Single && sub != i {
                    shift += self.substituent_increments(sub).1;
                }
            }
        }
        shift
    }

    fn proton_shift(&self, i: usize) -> f64 {
        let atom = self.mol.atom(i);
        if self.is_carbonyl(i) {
            let oxy = self.bonded(i).any(|(nb, o)| o == BondOrder::Single && self.z(nb) == 8);
            if oxy {
                return 8.05;
            }
            let conjugated = self.bonded(i).any(|(nb, _)| self.is_unsaturated_carbon(nb));
            return if conjugated { 9.95 } else { 9.7 };
        }
        if atom.aromatic {
            return self.aromatic_proton(i);
        }
        if self.bonded(i).any(|(_, o)| o == BondOrder::Triple) {
            let conjugated = self.bonded(i).any(|(nb, o)| o == BondOrder::Single && self.is_unsaturated_carbon(nb));
            return if conjugated { 3.05 } else { 2.0 };
        }
        if let Some(partner) =
            self.bonded(i).find(|&(nb, o)| o == BondOrder::Double && self.z(nb) == 6).map(|(nb, _)| nb)
        {
            let mut shift = 5.25;
            for (nb, _) in self.bonded(i).filter(|&(nb, _)| nb != partner) {
                shift += match self.z(nb) {
                    6 if self.is_carbonyl(nb) => 1.0,
                    6 if self.mol.atom(nb).aromatic => 1.35,
                    6 => 0.45,
                    8 => 1.2,
                    7 => 0.8,
                    17 => 1.1,
                    _ => 0.0,
                };
            }
            for (nb, _) in self.bonded(partner).filter(|&(nb, _)| nb != i) {
                shift += match self.z(nb) {
                    6 if self.is_carbonyl(nb) => 0.9,
                    6 if self.mol.atom(nb).aromatic => 0.2,
                    6 => -0.25,
                    8 => -1.0,
                    7 => -1.2,
                    17 => 0.1,
                    _ => 0.0,
                };
            }
            return shift;
        }
        if self.has_double_to(i, 7) {
            return 7.6;
        }
        self.sp3_proton(i)
    }

    fn sp3_proton(&self, i: usize) -> f64 {
        let mut shift = match self.mol.atom(i).hydrogens {
            4 => 0.23,
            3 => 0.86,
            2 => 1.37,
            _ => 1.5,
        };
        for (a, _) in self.bonded(i) {
            shift += match self.z(a) {
                6 if self.is_carbonyl(a) => 1.2,
                6 if self.mol.atom(a).aromatic => 1.5,
                6 if self.bonded(a).any(|(_, o)| o == BondOrder::Triple) => 1.0,
                6 if self.is_unsaturated_carbon(a) => 0.85,
                6 => 0.0,
                8 if self.acylated(a) => 2.8,
                8 if self.bonded(a).any(|(x, _)| x != i && self.mol.atom(x).aromatic) => 2.9,
                8 => 2.45,
                7 if self.acylated(a) => 1.9,
                7 if self.is_nitro_n(a) => 3.5,
                7 => 1.5,
                9 => 3.4,
                16 => 1.2,
                17 => 2.2,
                35 => 2.5,
                53 => 2.3,
                _ => 0.5,
            };
            if self.z(a) == 6 && self.is_sp3(a) {
                for (b, _) in self.bonded(a).filter(|&(b, _)| b != i) {
                    shift += match self.z(b) {
                        8 | 7 | 9 | 17 | 35 => 0.3,
                        6 if self.is_carbonyl(b) => 0.2,
                        _ => 0.0,
                    };
                }
            }
        }
        shift
    }

    fn aromatic_proton(&self, i: usize) -> f64 {
        let mut shift = 7.26;
        let mut next_to_hetero = false;
        for nb in self.ring_neighbors(i) {
            match self.z(nb) {
                7 if self.mol.atom(nb).hydrogens > 0 => shift -= 0.6,
                7 => shift += 1.3,
                8 => shift += 0.15,
                16 => shift += 0.05,
                _ => continue,
            }
            next_to_hetero = true;
        }
        if self.ring_size[i] == 5 && !next_to_hetero {
            shift -= 0.9;
        }
        for nb in self.ring_neighbors(i) {
            for (sub, order) in self.exocyclic(nb) {
                if order == BondOrder::Double && self.z(sub) == 8 {
                    shift -= 0.9;
                    continue;
                }
                shift += match self.z(sub) {
                    6 if self.is_carbonyl(sub) => 0.62,
                    6 if self.bonded(sub).any(|(_, o)| o == BondOrder::Triple) => 0.36,
                    6 => -0.18,
                    8 => -0.48,
                    7 if self.is_nitro_n(sub) => 0.95,
                    7 => -0.75,
                    9 => -0.26,
                    35 => 0.18,
                    _ => 0.0,
                };
            }
        }
        shift
    }

    fn heteroatom_proton_shift(&self, i: usize) -> f64 {
        let atom = self.mol.atom(i);
        let on_aromatic = self.bonded(i).any(|(nb, _)| self.mol.atom(nb).aromatic);
        match self.z(i) {
            8 if self.acylated(i) => 11.5,
            8 if on_aromatic => 5.5,
            8 => 2.2,
            7 if atom.aromatic => 8.0,
            7 if self.acylated(i) => 6.5,
            7 if on_aromatic => 3.6,
            7 if atom.charge > 0 => 7.5,
            7 => 1.2,
            16 => 1.5,
            _ => 2.0,
        }
    }

    fn coupling(&self, i: usize) -> f64 {
        if self.is_carbonyl(i) {
            return 2.5;
        }
        if self.mol.atom(i).aromatic {
            return 7.8;
        }
        if self.bonded(i).any(|(nb, o)| o == BondOrder::Double && self.z(nb) == 6) {
            return 11.5;
        }
        if self.bonded(i).any(|(nb, _)| self.is_carbonyl(nb) && self.mol.atom(nb).hydrogens > 0) {
            return 2.5;
        }
        7.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;
    use crate::spectra::parse_spectrum;

    fn sim(s: &str) -> NmrSpectrum {
        simulate_nmr(&parse_smiles(s).unwrap(), 7).unwrap()
    }

    #[test]
    fn methane() {
        let s = sim("C");
        assert_eq!(s.carbon.len(), 1);
        assert!((-5.0..=60.0).contains(&s.carbon[0].shift));
        assert_eq!(s.hydrogen.len(), 1);
        assert_eq!((s.hydrogen[0].count, s.hydrogen[0].pattern.as_str()), (4, "s"));
    }

    #[test]
    fn acetone_carbonyl_is_most_deshielded() {
        let mol = parse_smiles("CC(=O)C").unwrap();
        let s = simulate_nmr(&mol, 3).unwrap();
        assert_eq!(s.carbon.len(), 2);
        assert!(s.carbon[1].shift > 190.0 && s.carbon[1].count == 1);
        assert_eq!(s.carbon[0].count, 2);
    }

    #[test]
    fn anhydride_resembles_worked_example() {
        let s = sim("CCC(=O)OC(=O)CC");
        assert_eq!(s.carbon.iter().map(|p| p.count).collect::<Vec<_>>(), vec![2, 2, 2]);
        let h: Vec<(u32, &str)> = s.hydrogen.iter().map(|p| (p.count, p.pattern.as_str())).collect();
        assert_eq!(h, vec![(6, "t"), (4, "q")]);
        assert!(s.hydrogen.iter().all(|p| p.coupling.is_some()));
    }

    #[test]
    fn deterministic_and_numbering_invariant() {
        let a = simulate_nmr(&parse_smiles("CCOC(=O)c1ccccc1").unwrap(), 11).unwrap();
        let b = simulate_nmr(&parse_smiles("c1ccc(cc1)C(=O)OCC").unwrap(), 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, simulate_nmr(&parse_smiles("CCOC(=O)c1ccccc1").unwrap(), 11).unwrap());
        assert_ne!(a, simulate_nmr(&parse_smiles("CCOC(=O)c1ccccc1").unwrap(), 12).unwrap());
    }

    #[test]
    fn text_round_trip() {
        for smiles in ["CCO", "OC(=O)c1ccccc1O", "C", "ClC(Cl)(Cl)Cl", "C=CC(=O)OC", "c1ccncc1"] {
            let s = sim(smiles);
            let back = parse_spectrum(&s.cnmr_text(), &s.hnmr_text()).unwrap();
            assert_eq!(back, s, "{smiles}");
        }
    }

    #[test]
    fn no_carbon() {
        assert_eq!(simulate_nmr(&parse_smiles("O").unwrap(), 0), Err(SpectraError::NoCarbon));
    }
}

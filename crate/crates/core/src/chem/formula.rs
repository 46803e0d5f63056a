use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::element::Element;
use super::molecule::Molecule;
use super::ChemError;

/// Element counts, hydrogens included. Serializes in Hill order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Formula {
    counts: BTreeMap<Element, u32>,
}

impl Formula {
    pub fn count(&self, element: Element) -> u32 {
        self.counts.get(&element).copied().unwrap_or(0)
    }

    pub fn add(&mut self, element: Element, n: u32) {
        if n > 0 {
            *self.counts.entry(element).or_insert(0) += n;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn elements(&self) -> impl Iterator<Item = (Element, u32)> + '_ {
        self.counts.iter().map(|(e, n)| (*e, *n))
    }

    /// Elements in Hill order: C and H first when carbon is present,
    /// otherwise everything alphabetical by symbol.
    fn hill_order(&self) -> Vec<(Element, u32)> {
        let mut rest: Vec<(Element, u32)> = self.elements().collect();
        let mut out = Vec::with_capacity(rest.len());
        if self.count(Element::C) > 0 {
            for e in [Element::C, Element::H] {
                if let Some(pos) = rest.iter().position(|(x, _)| *x == e) {
                    out.push(rest.remove(pos));
                }
            }
        }
        rest.sort_by(|a, b| a.0.symbol().cmp(b.0.symbol()));
        out.extend(rest);
        out
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (element, n) in self.hill_order() {
            if n == 1 {
                write!(f, "{element}")?;
            } else {
                write!(f, "{element}{n}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for Formula {
    type Err = ChemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}

/// Parses an element+count string such as `C6H10O3`.
pub fn parse_formula(text: &str) -> Result<Formula, ChemError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(ChemError::Syntax { pos: 0, message: "empty formula".into() });
    }
    let b = text.as_bytes();
    let mut formula = Formula::default();
    let mut i = 0;
    while i < b.len() {
        if !b[i].is_ascii_uppercase() {
            return Err(ChemError::Syntax { pos: i, message: format!("expected element symbol at '{}'", &text[i..]) });
        }
        let start = i;
        i += 1;
        while i < b.len() && b[i].is_ascii_lowercase() {
            i += 1;
        }
        let symbol = &text[start..i];
        let element = Element::from_symbol(symbol)
            .ok_or_else(|| ChemError::Syntax { pos: start, message: format!("unknown element '{symbol}'") })?;
        let digits_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        let n = if digits_start == i {
            1
        } else {
            text[digits_start..i]
                .parse::<u32>()
                .map_err(|_| ChemError::Syntax { pos: digits_start, message: "bad element count".into() })?
        };
        formula.add(element, n);
    }
    Ok(formula)
}

/// Molecular formula including implicit and explicit hydrogens. Charges are ignored.
pub fn molecular_formula(mol: &Molecule) -> Formula {
    let mut formula = Formula::default();
    for atom in mol.atoms() {
        formula.add(atom.element, 1);
        formula.add(Element::H, atom.hydrogens as u32);
    }
    formula
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    #[test]
    fn parses_hill_strings() {
        let f = parse_formula("C6H10O3").unwrap();
        assert_eq!((f.count(Element::C), f.count(Element::H), f.count(Element::O)), (6, 10, 3));
        let f = parse_formula("CH4").unwrap();
        assert_eq!((f.count(Element::C), f.count(Element::H)), (1, 4));
        let f = parse_formula("C2H5Br").unwrap();
        assert_eq!(f.count(Element::BR), 1);
        assert_eq!(f.to_string(), "C2H5Br");
    }

    #[test]
    fn rejects_unknown_elements() {
        assert!(parse_formula("C2Xx").is_err());
        assert!(parse_formula("c2h6").is_err());
        assert!(parse_formula("").is_err());
    }

    #[test]
    fn formula_of_molecules() {
        assert_eq!(molecular_formula(&parse_smiles("CCC(=O)OC(=O)CC").unwrap()).to_string(), "C6H10O3");
        assert_eq!(molecular_formula(&parse_smiles("C").unwrap()).to_string(), "CH4");
        assert_eq!(molecular_formula(&parse_smiles("[NH4+]").unwrap()).to_string(), "H4N");
        assert_eq!(molecular_formula(&parse_smiles("[H]C([H])([H])[H]").unwrap()).to_string(), "CH4");
        assert_eq!(molecular_formula(&parse_smiles("ClCCl").unwrap()).to_string(), "CH2Cl2");
    }

    #[test]
    fn hill_order_without_carbon() {
        assert_eq!(parse_formula("OH2").unwrap().to_string(), "H2O");
        assert_eq!(parse_formula("NaCl").unwrap().to_string(), "ClNa");
    }
}

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::NmrSpectrum;

pub const CSHIFT_VOCAB: usize = 2500;
pub const HSHIFT_VOCAB: usize = 1500;
pub const SPLIT_VOCAB: usize = 75;
pub const COUPLING_VOCAB: usize = 200;

/// Absorbs binary rounding so that e.g. 9.1 ppm lands in bin 91, not 90.
const BIN_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HydrogenToken {
    pub shift: u16,
    pub split: u16,
    pub coupling: u16,
}

/// Per-atom token IDs: one carbon token per carbon, one triple per proton.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectrumTokens {
    pub carbon: Vec<u16>,
    pub hydrogen: Vec<HydrogenToken>,
    /// Peaks whose splitting pattern is not in the registry (mapped to ID 0).
    pub unknown_patterns: usize,
}

impl SpectrumTokens {
    pub fn len(&self) -> usize {
        self.carbon.len() + self.hydrogen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn bin(value: f64, max: f64, scale: f64) -> u16 {
    let v = if value.is_nan() { 0.0 } else { value.clamp(0.0, max) };
    (v * scale + BIN_EPS).floor() as u16
}

pub fn cshift_token(shift: f64) -> u16 {
    bin(shift, 249.9, 10.0)
}

pub fn hshift_token(shift: f64) -> u16 {
    bin(shift, 14.99, 100.0)
}

/// 0 is reserved for an absent coupling constant.
pub fn coupling_token(j: Option<f64>) -> u16 {
    match j {
        None => 0,
        Some(j) => 1 + bin(j, 19.8, 10.0),
    }
}

const SPLIT_NAMES: &[&str] = &[
    "s", "d", "t", "q", "quint", "sext", "sept", "oct", "non", "m", "br", "br s", "br d", "br t", "dd", "dt", "td",
    "dq", "qd", "tt", "qq", "ddd", "ddt", "dtd", "tdd", "dtt", "tdt", "ttd", "dddd", "ddq", "dqd", "qdd", "qt", "tq",
    "app s", "app d", "app t", "app q", "app dd", "app dt", "app td", "ABq", "AB", "AA'BB'", "ABX", "dm", "tm", "qm",
    "sm", "dsept", "septd", "dquint", "quintd", "tquint", "br m",
];

const SPLIT_ALIASES: &[(&str, &str)] = &[
    ("singlet", "s"),
    ("doublet", "d"),
    ("triplet", "t"),
    ("quartet", "q"),
    ("multiplet", "m"),
    ("p", "quint"),
    ("pent", "quint"),
    ("quin", "quint"),
    ("quintet", "quint"),
    ("sex", "sext"),
    ("sextet", "sext"),
    ("hept", "sept"),
    ("sep", "sept"),
    ("septet", "sept"),
    ("bs", "br s"),
    ("brs", "br s"),
    ("br.s", "br s"),
    ("br. s", "br s"),
    ("bd", "br d"),
    ("brd", "br d"),
    ("abq", "ABq"),
];

/// Registry of splitting pattern names; ID 0 is "unknown", IDs start at 1.
pub fn split_registry() -> &'static HashMap<String, u16> {
    static REGISTRY: OnceLock<HashMap<String, u16>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        assert!(SPLIT_NAMES.len() < SPLIT_VOCAB, "split registry exceeds its vocabulary");
        let mut map: HashMap<String, u16> =
            SPLIT_NAMES.iter().enumerate().map(|(i, name)| (normalize(name), i as u16 + 1)).collect();
        for (alias, target) in SPLIT_ALIASES {
            let id = map[&normalize(target)];
            map.insert(normalize(alias), id);
        }
        map
    })
}

fn normalize(pattern: &str) -> String {
    pattern.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Registry ID of a splitting pattern, 0 when unknown.
pub fn split_id(pattern: &str) -> u16 {
    split_registry().get(&normalize(pattern)).copied().unwrap_or(0)
}

pub fn tokenize(spectrum: &NmrSpectrum) -> SpectrumTokens {
    let mut tokens = SpectrumTokens::default();
    for peak in &spectrum.carbon {
        let t = cshift_token(peak.shift);
        tokens.carbon.extend(std::iter::repeat_n(t, peak.count as usize));
    }
    for peak in &spectrum.hydrogen {
        let split = split_id(&peak.pattern);
        if split == 0 {
            tokens.unknown_patterns += 1;
            log::warn!("unknown splitting pattern '{}' mapped to the unknown token", peak.pattern);
        }
        let t = HydrogenToken { shift: hshift_token(peak.shift), split, coupling: coupling_token(peak.coupling) };
        tokens.hydrogen.extend(std::iter::repeat_n(t, peak.count as usize));
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::parse_spectrum;

    #[test]
    fn bin_fixtures() {
        assert_eq!(cshift_token(49.0), 490);
        assert_eq!(cshift_token(9.1), 91);
        assert_eq!(hshift_token(5.44), 544);
        assert_eq!(coupling_token(Some(1.9)), 20);
        assert_eq!(coupling_token(None), 0);
    }

    #[test]
    fn bins_clamp_into_vocabularies() {
        assert_eq!(cshift_token(-3.0), 0);
        assert_eq!(cshift_token(400.0) as usize, CSHIFT_VOCAB - 1);
        assert_eq!(hshift_token(20.0) as usize, HSHIFT_VOCAB - 1);
        assert_eq!(coupling_token(Some(50.0)) as usize, COUPLING_VOCAB - 1);
    }

    #[test]
    fn registry_ids_are_bounded_and_aliased() {
        assert!(split_registry().values().all(|&id| (id as usize) < SPLIT_VOCAB && id > 0));
        assert_eq!(split_id("quint"), split_id("p"));
        assert_eq!(split_id("br s"), split_id("bs"));
        assert_eq!(split_id("D"), split_id("d"));
        assert_eq!(split_id("weird"), 0);
    }

    #[test]
    fn multiplicity_expansion() {
        let spec = parse_spectrum(
            "9.1 (2C, s), 27.8 (2C, s), 170.5 (2C, s)",
            "1.06 (6H, t, J = 7.3 Hz), 2.50 (4H, q, J = 7.3 Hz)",
        )
        .unwrap();
        let t = tokenize(&spec);
        assert_eq!(t.carbon, vec![91, 91, 278, 278, 1705, 1705]);
        assert_eq!(t.hydrogen.len(), 10);
        assert_eq!(t.hydrogen[0], HydrogenToken { shift: 106, split: split_id("t"), coupling: 74 });
        assert_eq!(t.unknown_patterns, 0);
    }

    #[test]
    fn unknown_patterns_are_tallied() {
        let spec = parse_spectrum("10.0 (1C, s)", "1.0 (2H, zz), 2.0 (1H, yy)").unwrap();
        let t = tokenize(&spec);
        assert_eq!(t.unknown_patterns, 2);
        assert!(t.hydrogen.iter().all(|h| h.split == 0));
    }
}

//! NMR peak lists: parsing, tokenization into encoder vocabularies, and an
//! additive-increment simulator for synthetic training spectra.

mod parse;
mod simulate;
mod tokens;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse_cnmr, parse_hnmr, parse_spectrum};
pub use simulate::simulate_nmr;
pub use tokens::{
    coupling_token, cshift_token, hshift_token, split_id, split_registry, tokenize, HydrogenToken, SpectrumTokens,
    COUPLING_VOCAB, CSHIFT_VOCAB, HSHIFT_VOCAB, SPLIT_VOCAB,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectraError {
    #[error("syntax error in clause {clause}: {message}")]
    Syntax { clause: usize, message: String },
    #[error("molecule has no carbon atoms")]
    NoCarbon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonPeak {
    pub shift: f64,
    pub count: u32,
    pub pattern: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydrogenPeak {
    pub shift: f64,
    pub count: u32,
    pub pattern: String,
    /// First coupling constant in Hz, when reported.
    pub coupling: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NmrSpectrum {
    pub carbon: Vec<CarbonPeak>,
    pub hydrogen: Vec<HydrogenPeak>,
}

impl NmrSpectrum {
    /// C-NMR text, e.g. `9.1 (2C, s), 27.8 (2C, s)`.
    pub fn cnmr_text(&self) -> String {
        self.carbon.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", ")
    }

    /// H-NMR text, e.g. `1.06 (6H, t, J = 7.3 Hz)`. Empty when there are no protons.
    pub fn hnmr_text(&self) -> String {
        self.hydrogen.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", ")
    }

    pub fn carbon_count(&self) -> u32 {
        self.carbon.iter().map(|p| p.count).sum()
    }

    pub fn hydrogen_count(&self) -> u32 {
        self.hydrogen.iter().map(|p| p.count).sum()
    }
}

impl fmt::Display for CarbonPeak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1} ({}C, {})", self.shift, self.count, self.pattern)
    }
}

impl fmt::Display for HydrogenPeak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ({}H, {}", self.shift, self.count, self.pattern)?;
        if let Some(j) = self.coupling {
            write!(f, ", J = {j:.1} Hz")?;
        }
        write!(f, ")")
    }
}

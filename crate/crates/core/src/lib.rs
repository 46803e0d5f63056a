pub mod chem;
pub mod harness;
pub mod kb;
pub mod llm;
pub mod scorer;
pub mod search;
pub mod spectra;

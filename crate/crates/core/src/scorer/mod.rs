//! Contrastive molecule–spectrum reward model.
//!
//! A molecule encoder (GIN over atoms, MLP over the dense fingerprint, fused
//! by a head MLP) and a spectrum encoder (summed peak-token embeddings through
//! a pre-norm Transformer without positions) map into a shared space. The
//! reward of a candidate is the cosine of the two embeddings.

mod checkpoint;
mod features;
mod layers;
mod loss;
mod model;
mod params;
mod train;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chem::{Molecule, FINGERPRINT_BITS};
use crate::spectra::{SpectrumTokens, COUPLING_VOCAB, CSHIFT_VOCAB, HSHIFT_VOCAB, SPLIT_VOCAB};

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use features::{atom_features, MolInput, ATOM_FEATURES};
pub use loss::{nt_xent, row_cosines};
pub use params::{Adam, ParamSet};
pub use train::{evaluate_pairs, gradients, train, EpochStats, PairEvaluation, TrainOutcome};

use model::{Layout, MolBatch, SpecBatch};

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("molecule has no atoms")]
    EmptyMolecule,
    #[error("spectrum has no tokens")]
    EmptySpectrum,
    #[error("contrastive batch needs at least 2 pairs, got {0}")]
    BatchTooSmall(usize),
    #[error("training diverged at epoch {epoch}")]
    DivergenceError { epoch: usize },
    #[error("invalid checkpoint: {0}")]
    FormatError(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid scorer config: {0}")]
    InvalidConfig(String),
    #[error("token {token} out of range for {table} vocabulary of {vocab}")]
    TokenOutOfRange { table: &'static str, token: u16, vocab: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerConfig {
    pub atom_features: usize,
    pub gin_layers: usize,
    pub gin_width: usize,
    pub fp_dim: usize,
    pub fp_hidden: usize,
    pub mol_hidden: usize,
    pub embed_dim: usize,
    pub transformer_layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub cshift_vocab: usize,
    pub hshift_vocab: usize,
    pub split_vocab: usize,
    pub coupling_vocab: usize,
    pub tau: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            atom_features: ATOM_FEATURES,
            gin_layers: 5,
            gin_width: 300,
            fp_dim: FINGERPRINT_BITS,
            fp_hidden: 300,
            mol_hidden: 300,
            embed_dim: 256,
            transformer_layers: 2,
            heads: 4,
            ffn_dim: 512,
            cshift_vocab: CSHIFT_VOCAB,
            hshift_vocab: HSHIFT_VOCAB,
            split_vocab: SPLIT_VOCAB,
            coupling_vocab: COUPLING_VOCAB,
            tau: 0.07,
            epochs: 100,
            learning_rate: 1e-3,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<(), ScorerError> {
        let dims = [
            ("atom_features", self.atom_features),
            ("gin_layers", self.gin_layers),
            ("gin_width", self.gin_width),
            ("fp_dim", self.fp_dim),
            ("fp_hidden", self.fp_hidden),
            ("mol_hidden", self.mol_hidden),
            ("embed_dim", self.embed_dim),
            ("heads", self.heads),
            ("ffn_dim", self.ffn_dim),
            ("cshift_vocab", self.cshift_vocab),
            ("hshift_vocab", self.hshift_vocab),
            ("split_vocab", self.split_vocab),
            ("coupling_vocab", self.coupling_vocab),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(ScorerError::InvalidConfig(format!("{name} must be positive")));
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return Err(ScorerError::InvalidConfig(format!(
                "embed_dim {} not divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(ScorerError::InvalidConfig(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ScorerError::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// An embedding in the shared molecule–spectrum space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVec(pub Vec<f64>);

impl EmbeddingVec {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Cosine similarity clamped to [-1, 1]; zero if either vector is zero.
    pub fn cosine(&self, other: &EmbeddingVec) -> f64 {
        let (na, nb) = (self.norm(), other.norm());
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Trained encoder parameters with their config and content id.
#[derive(Debug, Clone)]
pub struct ScorerCheckpoint {
    config: ScorerConfig,
    params: ParamSet,
    layout: Layout,
    id: String,
    best_val_loss: Option<f64>,
}

impl PartialEq for ScorerCheckpoint {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.params == other.params
            && self.id == other.id
            && self.best_val_loss.map(f64::to_bits) == other.best_val_loss.map(f64::to_bits)
    }
}

impl ScorerCheckpoint {
    /// Freshly initialized parameters, deterministic in `cfg.seed`.
    pub fn initialize(cfg: &ScorerConfig) -> Result<ScorerCheckpoint, ScorerError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (params, _) = model::build(cfg, Some(&mut rng));
        ScorerCheckpoint::from_params(cfg.clone(), params, None)
    }

    /// Wraps parameters after checking every shape against `config`. Values
    /// are rounded to `f32` so the in-memory model equals its saved form.
    pub fn from_params(
        config: ScorerConfig,
        mut params: ParamSet,
        best_val_loss: Option<f64>,
    ) -> Result<ScorerCheckpoint, ScorerError> {
        config.validate()?;
        let (template, layout) = model::build(&config, None);
        check_shapes(&template, &params)?;
        params.quantize_f32();
        let id = checkpoint::content_id(&config, &params);
        Ok(ScorerCheckpoint { config, params, layout, id, best_val_loss })
    }

    pub fn config(&self) -> &ScorerConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn best_val_loss(&self) -> Option<f64> {
        self.best_val_loss
    }

    pub fn encode_molecule(&self, mol: &Molecule) -> Result<EmbeddingVec, ScorerError> {
        Ok(self.encode_molecules(std::slice::from_ref(mol))?.remove(0))
    }

    pub fn encode_molecules(&self, mols: &[Molecule]) -> Result<Vec<EmbeddingVec>, ScorerError> {
        let inputs = mols.iter().map(|m| self.mol_input(m)).collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&MolInput> = inputs.iter().collect();
        Ok(rows_to_vecs(self.forward_molecules(&refs)))
    }

    pub fn encode_spectrum(&self, tokens: &SpectrumTokens) -> Result<EmbeddingVec, ScorerError> {
        Ok(self.encode_spectra(std::slice::from_ref(tokens))?.remove(0))
    }

    pub fn encode_spectra(&self, spectra: &[SpectrumTokens]) -> Result<Vec<EmbeddingVec>, ScorerError> {
        for t in spectra {
            self.check_tokens(t)?;
        }
        let refs: Vec<&SpectrumTokens> = spectra.iter().collect();
        Ok(rows_to_vecs(self.forward_spectra(&refs)))
    }

    /// Reward of a candidate molecule against an observed spectrum.
    pub fn score(&self, mol: &Molecule, tokens: &SpectrumTokens) -> Result<f64, ScorerError> {
        Ok(self.encode_molecule(mol)?.cosine(&self.encode_spectrum(tokens)?))
    }

    pub(crate) fn mol_input(&self, mol: &Molecule) -> Result<MolInput, ScorerError> {
        if mol.atom_count() == 0 {
            return Err(ScorerError::EmptyMolecule);
        }
        let input = MolInput::from_molecule(mol);
        if input.atoms.ncols() != self.config.atom_features || input.fingerprint.len() != self.config.fp_dim {
            return Err(ScorerError::ShapeMismatch(format!(
                "featurizer produces {}+{} inputs, config expects {}+{}",
                input.atoms.ncols(),
                input.fingerprint.len(),
                self.config.atom_features,
                self.config.fp_dim
            )));
        }
        Ok(input)
    }

    pub(crate) fn check_tokens(&self, t: &SpectrumTokens) -> Result<(), ScorerError> {
        if t.is_empty() {
            return Err(ScorerError::EmptySpectrum);
        }
        let cfg = &self.config;
        let check = |table: &'static str, token: u16, vocab: usize| {
            if (token as usize) < vocab {
                Ok(())
            } else {
                Err(ScorerError::TokenOutOfRange { table, token, vocab })
            }
        };
        for &c in &t.carbon {
            check("carbon shift", c, cfg.cshift_vocab)?;
        }
        for h in &t.hydrogen {
            check("hydrogen shift", h.shift, cfg.hshift_vocab)?;
            check("splitting", h.split, cfg.split_vocab)?;
            check("coupling", h.coupling, cfg.coupling_vocab)?;
        }
        Ok(())
    }

    pub(crate) fn forward_molecules(&self, inputs: &[&MolInput]) -> Array2<f64> {
        model::mol_forward(&self.params, &self.layout, &MolBatch::new(inputs)).0
    }

    pub(crate) fn forward_spectra(&self, inputs: &[&SpectrumTokens]) -> Array2<f64> {
        model::spec_forward(&self.params, &self.layout, &self.config, &SpecBatch::new(inputs)).0
    }
}

fn rows_to_vecs(x: Array2<f64>) -> Vec<EmbeddingVec> {
    x.rows().into_iter().map(|r| EmbeddingVec(r.to_vec())).collect()
}

fn check_shapes(template: &ParamSet, params: &ParamSet) -> Result<(), ScorerError> {
    if template.len() != params.len() {
        return Err(ScorerError::ShapeMismatch(format!("expected {} tensors, found {}", template.len(), params.len())));
    }
    for i in 0..template.len() {
        if template.name(i) != params.name(i) || template.get(i).dim() != params.get(i).dim() {
            return Err(ScorerError::ShapeMismatch(format!(
                "tensor {i}: expected {} {:?}, found {} {:?}",
                template.name(i),
                template.get(i).dim(),
                params.name(i),
                params.get(i).dim()
            )));
        }
    }
    Ok(())
}

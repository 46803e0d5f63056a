use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::loss::{nt_xent, row_cosines};
use super::model::{self, Layout, MolBatch, SpecBatch};
use super::{Adam, MolInput, ParamSet, ScorerCheckpoint, ScorerConfig, ScorerError};
use crate::chem::Molecule;
use crate::spectra::SpectrumTokens;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub checkpoint: ScorerCheckpoint,
    pub history: Vec<EpochStats>,
    /// Training-set loss of the initial parameters.
    pub initial_train_loss: f64,
    pub best_epoch: usize,
}

fn batch_loss(
    params: &ParamSet,
    layout: &Layout,
    cfg: &ScorerConfig,
    mols: &[&MolInput],
    specs: &[&SpectrumTokens],
    grads: Option<&mut ParamSet>,
) -> Result<f64, ScorerError> {
    let mb = MolBatch::new(mols);
    let sb = SpecBatch::new(specs);
    let (hm, mcache) = model::mol_forward(params, layout, &mb);
    let (hs, scache) = model::spec_forward(params, layout, cfg, &sb);
    if mols.len() == 1 {
        return Ok(1.0 - row_cosines(&hm, &hs)[0]);
    }
    let (loss, dm, ds) = nt_xent(&hm, &hs, cfg.tau)?;
    if let Some(grads) = grads {
        model::mol_backward(params, layout, &mb, &mcache, &dm, grads);
        model::spec_backward(params, layout, cfg, &sb, &scache, &ds, grads);
    }
    Ok(loss)
}

/// Batch contrastive loss and its gradient with respect to every parameter.
pub fn gradients(
    cfg: &ScorerConfig,
    params: &ParamSet,
    mols: &[&MolInput],
    specs: &[&SpectrumTokens],
) -> Result<(f64, ParamSet), ScorerError> {
    if mols.len() < 2 {
        return Err(ScorerError::BatchTooSmall(mols.len()));
    }
    let (template, layout) = model::build(cfg, None);
    let mut grads = template.zeros_like();
    let loss = batch_loss(params, &layout, cfg, mols, specs, Some(&mut grads))?;
    Ok((loss, grads))
}

/// Splits `0..n` into batches of `size`, folding a trailing singleton into
/// the previous batch so every contrastive batch has at least two pairs.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size.max(2)).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = order.len() - size.max(2) - 1;
        *out.last_mut().unwrap() = &order[start..];
    }
    out
}

struct Prepared {
    mols: Vec<MolInput>,
    specs: Vec<SpectrumTokens>,
}

fn prepare(ckpt: &ScorerCheckpoint, pairs: &[(Molecule, SpectrumTokens)]) -> Result<Prepared, ScorerError> {
    let mut mols = Vec::with_capacity(pairs.len());
    let mut specs = Vec::with_capacity(pairs.len());
    for (m, t) in pairs {
        mols.push(ckpt.mol_input(m)?);
        ckpt.check_tokens(t)?;
        specs.push(t.clone());
    }
    Ok(Prepared { mols, specs })
}

/// Size-weighted mean loss over `data` in fixed order. A single pair scores
/// `1 - cosine` since the contrastive loss needs negatives.
fn mean_loss(params: &ParamSet, layout: &Layout, cfg: &ScorerConfig, data: &Prepared) -> Result<f64, ScorerError> {
    let order: Vec<usize> = (0..data.mols.len()).collect();
    let mut total = 0.0;
    for batch in batches(&order, cfg.batch_size) {
        let mols: Vec<&MolInput> = batch.iter().map(|&i| &data.mols[i]).collect();
        let specs: Vec<&SpectrumTokens> = batch.iter().map(|&i| &data.specs[i]).collect();
        total += batch_loss(params, layout, cfg, &mols, &specs, None)? * batch.len() as f64;
    }
    Ok(total / order.len() as f64)
}

/// Adam over shuffled minibatches for `cfg.epochs`, keeping the parameters
/// with the lowest validation loss. Deterministic in `cfg.seed`.
pub fn train(
    pairs: &[(Molecule, SpectrumTokens)],
    val: &[(Molecule, SpectrumTokens)],
    cfg: &ScorerConfig,
) -> Result<TrainOutcome, ScorerError> {
    if pairs.len() < 2 {
        return Err(ScorerError::BatchTooSmall(pairs.len()));
    }
    if val.is_empty() {
        return Err(ScorerError::BatchTooSmall(0));
    }
    let init = ScorerCheckpoint::initialize(cfg)?;
    let train_set = prepare(&init, pairs)?;
    let val_set = prepare(&init, val)?;
    let layout = init.layout.clone();
    let mut params = init.params.clone();
    let mut grads = params.zeros_like();
    let mut adam = Adam::new(&params, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed);

    let initial_train_loss = mean_loss(&params, &layout, cfg, &train_set)?;
    let mut best = (f64::INFINITY, 0usize, params.clone());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in batches(&order, cfg.batch_size) {
            let mols: Vec<&MolInput> = batch.iter().map(|&i| &train_set.mols[i]).collect();
            let specs: Vec<&SpectrumTokens> = batch.iter().map(|&i| &train_set.specs[i]).collect();
            grads.fill_zero();
            let loss = batch_loss(&params, &layout, cfg, &mols, &specs, Some(&mut grads))?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(ScorerError::DivergenceError { epoch });
            }
            adam.update(&mut params, &grads);
            total += loss * batch.len() as f64;
        }
        let train_loss = total / pairs.len() as f64;
        let val_loss = mean_loss(&params, &layout, cfg, &val_set)?;
        if !val_loss.is_finite() || !params.all_finite() {
            return Err(ScorerError::DivergenceError { epoch });
        }
        log::info!("epoch {epoch}: train loss {train_loss:.4}, val loss {val_loss:.4}");
        if val_loss < best.0 {
            best = (val_loss, epoch, params.clone());
        }
        history.push(EpochStats { epoch, train_loss, val_loss });
    }
    let (best_val, best_epoch, best_params) =
        if cfg.epochs == 0 { (mean_loss(&params, &layout, cfg, &val_set)?, 0, params) } else { best };
    let checkpoint = ScorerCheckpoint::from_params(cfg.clone(), best_params, Some(best_val))?;
    Ok(TrainOutcome { checkpoint, history, initial_train_loss, best_epoch })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairEvaluation {
    pub pairs: usize,
    /// Mean cosine of each molecule with its own spectrum.
    pub matched_mean: f64,
    /// Mean cosine over all molecule/spectrum pairs that do not belong together.
    pub mismatched_mean: f64,
    /// Fraction of molecules whose own spectrum ranks first among all spectra;
    /// ties count against the molecule.
    pub recall_at_1: f64,
}

impl PairEvaluation {
    pub fn separation(&self) -> f64 {
        self.matched_mean - self.mismatched_mean
    }
}

/// Matched and mismatched score statistics of a held-out set.
pub fn evaluate_pairs(
    ckpt: &ScorerCheckpoint,
    pairs: &[(Molecule, SpectrumTokens)],
) -> Result<PairEvaluation, ScorerError> {
    let n = pairs.len();
    if n < 2 {
        return Err(ScorerError::BatchTooSmall(n));
    }
    let mols: Vec<Molecule> = pairs.iter().map(|(m, _)| m.clone()).collect();
    let specs: Vec<SpectrumTokens> = pairs.iter().map(|(_, t)| t.clone()).collect();
    let hm = ckpt.encode_molecules(&mols)?;
    let hs = ckpt.encode_spectra(&specs)?;
    let (mut matched, mut mismatched, mut hits) = (0.0, 0.0, 0usize);
    for (i, m) in hm.iter().enumerate() {
        let scores: Vec<f64> = hs.iter().map(|s| m.cosine(s)).collect();
        matched += scores[i];
        mismatched += scores.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, s)| s).sum::<f64>();
        if scores.iter().enumerate().all(|(j, &s)| j == i || s < scores[i]) {
            hits += 1;
        }
    }
    Ok(PairEvaluation {
        pairs: n,
        matched_mean: matched / n as f64,
        mismatched_mean: mismatched / (n * (n - 1)) as f64,
        recall_at_1: hits as f64 / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_singleton_is_folded() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), vec![4, 5]);
        let order: Vec<usize> = (0..8).collect();
        assert_eq!(batches(&order, 4).len(), 2);
        let order: Vec<usize> = (0..3).collect();
        assert_eq!(batches(&order, 64).len(), 1);
    }
}

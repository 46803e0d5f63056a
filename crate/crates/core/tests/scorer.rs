mod common;

use kmse::chem::parse_smiles;
use kmse::scorer::{load_checkpoint, save_checkpoint, train, ScorerConfig};
use kmse::spectra::{simulate_nmr, tokenize};

#[test]
fn analytic_gradients_match_finite_differences() {
    for seed in 0..3 {
        for (name, rel) in common::gradient_check(seed) {
            assert!(rel <= 1e-4, "seed {seed} tensor {name}: relative error {rel:.3e}");
        }
    }
}

fn small_config(epochs: usize) -> ScorerConfig {
    ScorerConfig {
        gin_layers: 2,
        gin_width: 32,
        fp_hidden: 32,
        mol_hidden: 32,
        embed_dim: 32,
        ffn_dim: 32,
        transformer_layers: 1,
        epochs,
        batch_size: 16,
        seed: 11,
        ..Default::default()
    }
}

fn pairs(range: std::ops::Range<usize>) -> Vec<(kmse::chem::Molecule, kmse::spectra::SpectrumTokens)> {
    common::CORPUS
        .lines()
        .skip(range.start)
        .take(range.len())
        .map(|s| {
            let m = parse_smiles(s).unwrap();
            let t = tokenize(&simulate_nmr(&m, 0).unwrap());
            (m, t)
        })
        .collect()
}

#[test]
fn training_reduces_loss_and_is_deterministic() {
    let train_set = pairs(0..40);
    let val = pairs(40..50);
    let cfg = small_config(5);
    let a = train(&train_set, &val, &cfg).unwrap();
    let b = train(&train_set, &val, &cfg).unwrap();
    assert_eq!(a.checkpoint.id(), b.checkpoint.id());
    assert_eq!(a.history.len(), 5);
    assert!(a.history.last().unwrap().train_loss < a.initial_train_loss);
    let best = a.history.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(a.checkpoint.best_val_loss(), Some(best));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.ckpt");
    save_checkpoint(&a.checkpoint, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    let (m, t) = &val[0];
    assert_eq!(loaded.score(m, t).unwrap(), a.checkpoint.score(m, t).unwrap());
}

#[test]
fn training_needs_two_pairs() {
    let one = pairs(0..1);
    assert!(train(&one, &one, &small_config(1)).is_err());
}

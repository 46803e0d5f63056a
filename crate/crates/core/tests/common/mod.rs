#![allow(dead_code)]

use kmse::chem::{parse_smiles, Molecule};

pub const CORPUS: &str = include_str!("../../data/corpus.smi");

pub fn corpus() -> Vec<Molecule> {
    CORPUS.lines().filter(|l| !l.trim().is_empty()).map(|l| parse_smiles(l).unwrap()).collect()
}

type AtomLabel = (kmse::chem::Element, i8, bool, u8, usize);

/// Graph isomorphism by ordered backtracking with degree/label pruning.
/// Atoms compare on (element, charge, aromatic, hydrogens); bonds on order.
pub fn isomorphic(a: &Molecule, b: &Molecule) -> bool {
    if a.atom_count() != b.atom_count() || a.bond_count() != b.bond_count() {
        return false;
    }
    let label = |m: &Molecule, i: usize| {
        let at = m.atom(i);
        (at.element, at.charge, at.aromatic, at.hydrogens, m.degree(i))
    };
    let mut la: Vec<_> = (0..a.atom_count()).map(|i| label(a, i)).collect();
    let mut lb: Vec<_> = (0..b.atom_count()).map(|i| label(b, i)).collect();
    la.sort();
    lb.sort();
    if la != lb {
        return false;
    }
    // Order atoms of `a` so that each has an earlier neighbor when possible.
    let n = a.atom_count();
    let mut order = Vec::new();
    let mut seen = vec![false; n];
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        order.push(s);
        let mut i = order.len() - 1;
        while i < order.len() {
            let v = order[i];
            i += 1;
            for &(w, _) in a.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    order.push(w);
                }
            }
        }
    }
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];
    fn go(
        a: &Molecule,
        b: &Molecule,
        order: &[usize],
        depth: usize,
        map: &mut [usize],
        used: &mut [bool],
        label: &dyn Fn(&Molecule, usize) -> AtomLabel,
    ) -> bool {
        if depth == order.len() {
            return true;
        }
        let v = order[depth];
        for t in 0..b.atom_count() {
            if used[t] || label(a, v) != label(b, t) {
                continue;
            }
            let ok = a.neighbors(v).iter().all(|&(w, bi)| {
                map[w] == usize::MAX || b.bond_between(t, map[w]).is_some_and(|bb| bb.order == a.bonds()[bi].order)
            });
            if !ok {
                continue;
            }
            map[v] = t;
            used[t] = true;
            if go(a, b, order, depth + 1, map, used, label) {
                return true;
            }
            map[v] = usize::MAX;
            used[t] = false;
        }
        false
    }
    go(a, b, &order, 0, &mut map, &mut used, &label)
}

/// Fisher-Yates permutation from a small LCG, independent of library RNGs.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let j = ((state >> 33) as usize) % (i + 1);
        p.swap(i, j);
    }
    p
}

/// Tiny encoder config exercising every block type.
pub fn gradcheck_config() -> kmse::scorer::ScorerConfig {
    kmse::scorer::ScorerConfig {
        atom_features: 5,
        gin_layers: 2,
        gin_width: 4,
        fp_dim: 6,
        fp_hidden: 4,
        mol_hidden: 5,
        embed_dim: 4,
        transformer_layers: 2,
        heads: 2,
        ffn_dim: 6,
        cshift_vocab: 7,
        hshift_vocab: 6,
        split_vocab: 5,
        coupling_vocab: 4,
        seed: 0,
        ..Default::default()
    }
}

/// Per-tensor relative error `‖numeric − analytic‖ / max(‖numeric‖, ‖analytic‖)`
/// between central finite differences and analytic gradients of the batch loss
/// on random molecules, spectra, and parameters drawn from `seed`.
pub fn gradient_check(seed: u64) -> Vec<(String, f64)> {
    use kmse::scorer::{gradients, MolInput, ParamSet, ScorerCheckpoint};
    use kmse::spectra::{HydrogenToken, SpectrumTokens};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let mut cfg = gradcheck_config();
    cfg.seed = seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params: ParamSet = ScorerCheckpoint::initialize(&cfg).unwrap().params().clone();
    for i in 0..params.len() {
        params.get_mut(i).mapv_inplace(|x| x + rng.random_range(-0.3..0.3));
    }
    let batch = 3;
    let mols: Vec<MolInput> = (0..batch)
        .map(|_| {
            let n = rng.random_range(2..6);
            let mut neighbors = vec![Vec::new(); n];
            for i in 1..n {
                let j = rng.random_range(0..i);
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
            MolInput {
                atoms: Array2::from_shape_fn((n, cfg.atom_features), |_| rng.random_range(-1.0..1.0)),
                neighbors,
                fingerprint: (0..cfg.fp_dim).map(|_| rng.random_range(0.0..1.0)).collect(),
            }
        })
        .collect();
    let specs: Vec<SpectrumTokens> = (0..batch)
        .map(|_| SpectrumTokens {
            carbon: (0..rng.random_range(1..4)).map(|_| rng.random_range(0..cfg.cshift_vocab as u16)).collect(),
            hydrogen: (0..rng.random_range(1..4))
                .map(|_| HydrogenToken {
                    shift: rng.random_range(0..cfg.hshift_vocab as u16),
                    split: rng.random_range(0..cfg.split_vocab as u16),
                    coupling: rng.random_range(0..cfg.coupling_vocab as u16),
                })
                .collect(),
            unknown_patterns: 0,
        })
        .collect();
    let mol_refs: Vec<&MolInput> = mols.iter().collect();
    let spec_refs: Vec<&SpectrumTokens> = specs.iter().collect();
    let (_, analytic) = gradients(&cfg, &params, &mol_refs, &spec_refs).unwrap();
    let h = 1e-5;
    let mut out = Vec::new();
    for t in 0..params.len() {
        let shape = params.get(t).raw_dim();
        let mut numeric = Array2::<f64>::zeros(shape);
        for idx in 0..numeric.len() {
            let (r, c) = (idx / numeric.ncols(), idx % numeric.ncols());
            let eval = |delta: f64| {
                let mut p = params.clone();
                p.get_mut(t)[[r, c]] += delta;
                gradients(&cfg, &p, &mol_refs, &spec_refs).unwrap().0
            };
            numeric[[r, c]] = (eval(h) - eval(-h)) / (2.0 * h);
        }
        let a = analytic.get(t);
        let diff = (&numeric - a).mapv(|x| x * x).sum().sqrt();
        let scale = numeric.mapv(|x| x * x).sum().sqrt().max(a.mapv(|x| x * x).sum().sqrt());
        let rel = if scale < 1e-10 { diff } else { diff / scale };
        out.push((params.name(t).to_string(), rel));
    }
    out
}

/// Small untrained scorer, enough to give every molecule a deterministic reward.
pub fn tiny_checkpoint() -> kmse::scorer::ScorerCheckpoint {
    let cfg = kmse::scorer::ScorerConfig {
        gin_layers: 2,
        gin_width: 16,
        fp_hidden: 16,
        mol_hidden: 16,
        embed_dim: 16,
        ffn_dim: 16,
        transformer_layers: 1,
        seed: 3,
        ..Default::default()
    };
    kmse::scorer::ScorerCheckpoint::initialize(&cfg).unwrap()
}

/// Question whose spectra are simulated from `smiles`.
pub fn question(id: &str, smiles: &str) -> kmse::search::ElucidationQuestion {
    let mol = parse_smiles(smiles).unwrap();
    let spectrum = kmse::spectra::simulate_nmr(&mol, 0).unwrap();
    kmse::search::ElucidationQuestion {
        id: id.to_string(),
        formula: kmse::chem::molecular_formula(&mol).to_string(),
        cnmr: spectrum.cnmr_text(),
        hnmr: spectrum.hnmr_text(),
        ir_image: None,
        target_smiles: Some(smiles.to_string()),
    }
}

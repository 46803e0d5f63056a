//! Molecule encoder (GIN over atoms + fingerprint MLP, fused by a head MLP)
//! and spectrum encoder (summed token embeddings + pre-norm Transformer),
//! batched, with hand-written backward passes.

use ndarray::{s, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::layers::{
    attention, attention_backward, layer_norm, layer_norm_backward, linear, linear_backward, relu, relu_backward,
    segment_mean, segment_mean_backward, AttentionCache, LayerNormCache,
};
use super::params::ParamSet;
use super::{MolInput, ScorerConfig};
use crate::spectra::{HydrogenToken, SpectrumTokens};

#[derive(Debug, Clone, Copy)]
pub struct Lin {
    pub w: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Norm {
    pub g: usize,
    pub b: usize,
}

#[derive(Debug, Clone)]
pub struct GinLayer {
    pub eps: usize,
    pub l1: Lin,
    pub l2: Lin,
}

#[derive(Debug, Clone)]
pub struct Block {
    pub ln1: Norm,
    pub qkv: Lin,
    pub out: Lin,
    pub ln2: Norm,
    pub ff1: Lin,
    pub ff2: Lin,
}

/// Parameter indices for every block of both encoders.
#[derive(Debug, Clone)]
pub struct Layout {
    pub gin: Vec<GinLayer>,
    pub fp1: Lin,
    pub fp2: Lin,
    pub head1: Lin,
    pub head2: Lin,
    pub emb_cshift: usize,
    pub emb_hshift: usize,
    pub emb_split: usize,
    pub emb_coupling: usize,
    pub blocks: Vec<Block>,
    pub ln_final: Norm,
}

enum Init {
    Zeros,
    Ones,
    FanIn(usize),
    Smooth,
    Uniform(f64),
}

struct Builder<'r> {
    params: ParamSet,
    rng: Option<&'r mut ChaCha8Rng>,
}

impl Builder<'_> {
    fn tensor(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        let mut t = Array2::zeros((rows, cols));
        if let Some(rng) = self.rng.as_deref_mut() {
            match init {
                Init::Zeros => {}
                Init::Ones => t.fill(1.0),
                Init::FanIn(fan_in) => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    t.mapv_inplace(|_| rng.random_range(-bound..bound));
                }
                Init::Uniform(bound) => t.mapv_inplace(|_| rng.random_range(-bound..bound)),
                Init::Smooth => smooth_embedding(&mut t),
            }
        }
        self.params.add(name, t)
    }

    fn lin(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Lin {
        Lin {
            w: self.tensor(format!("{name}.w"), fan_in, fan_out, Init::FanIn(fan_in)),
            b: self.tensor(format!("{name}.b"), 1, fan_out, Init::FanIn(fan_in)),
        }
    }

    fn norm(&mut self, name: &str, width: usize) -> Norm {
        Norm {
            g: self.tensor(format!("{name}.g"), 1, width, Init::Ones),
            b: self.tensor(format!("{name}.b"), 1, width, Init::Zeros),
        }
    }
}

/// Sinusoidal rows over the token index so neighboring bins start out similar.
fn smooth_embedding(t: &mut Array2<f64>) {
    let (rows, cols) = t.dim();
    let pairs = cols.div_ceil(2);
    let min_period = 8.0f64;
    let max_period = 4.0 * rows as f64;
    for k in 0..pairs {
        let frac = if pairs > 1 { k as f64 / (pairs - 1) as f64 } else { 0.0 };
        let period = min_period * (max_period / min_period).powf(frac);
        let omega = std::f64::consts::TAU / period;
        for r in 0..rows {
            let phase = omega * r as f64;
            t[[r, 2 * k]] = phase.sin();
            if 2 * k + 1 < cols {
                t[[r, 2 * k + 1]] = phase.cos();
            }
        }
    }
}

/// Builds the parameter layout for `cfg`. With `rng`, parameters are
/// initialized; without, they are zero (shape template).
pub fn build(cfg: &ScorerConfig, rng: Option<&mut ChaCha8Rng>) -> (ParamSet, Layout) {
    let mut b = Builder { params: ParamSet::new(), rng };
    let mut gin = Vec::with_capacity(cfg.gin_layers);
    for l in 0..cfg.gin_layers {
        let input = if l == 0 { cfg.atom_features } else { cfg.gin_width };
        let eps = b.tensor(format!("gin{l}.eps"), 1, 1, Init::Zeros);
        let l1 = b.lin(&format!("gin{l}.mlp1"), input, cfg.gin_width);
        let l2 = b.lin(&format!("gin{l}.mlp2"), cfg.gin_width, cfg.gin_width);
        gin.push(GinLayer { eps, l1, l2 });
    }
    let fp1 = b.lin("fp.mlp1", cfg.fp_dim, cfg.fp_hidden);
    let fp2 = b.lin("fp.mlp2", cfg.fp_hidden, cfg.fp_hidden);
    let head1 = b.lin("head.mlp1", cfg.gin_width + cfg.fp_hidden, cfg.mol_hidden);
    let head2 = b.lin("head.mlp2", cfg.mol_hidden, cfg.embed_dim);
    let d = cfg.embed_dim;
    let emb_cshift = b.tensor("emb.cshift".into(), cfg.cshift_vocab, d, Init::Smooth);
    let emb_hshift = b.tensor("emb.hshift".into(), cfg.hshift_vocab, d, Init::Smooth);
    let emb_split = b.tensor("emb.split".into(), cfg.split_vocab, d, Init::Uniform(0.5));
    let emb_coupling = b.tensor("emb.coupling".into(), cfg.coupling_vocab, d, Init::Smooth);
    let mut blocks = Vec::with_capacity(cfg.transformer_layers);
    for l in 0..cfg.transformer_layers {
        let ln1 = b.norm(&format!("tf{l}.ln1"), d);
        let qkv = b.lin(&format!("tf{l}.qkv"), d, 3 * d);
        let out = b.lin(&format!("tf{l}.out"), d, d);
        let ln2 = b.norm(&format!("tf{l}.ln2"), d);
        let ff1 = b.lin(&format!("tf{l}.ff1"), d, cfg.ffn_dim);
        let ff2 = b.lin(&format!("tf{l}.ff2"), cfg.ffn_dim, d);
        blocks.push(Block { ln1, qkv, out, ln2, ff1, ff2 });
    }
    let ln_final = b.norm("tf.ln_final", d);
    let layout =
        Layout { gin, fp1, fp2, head1, head2, emb_cshift, emb_hshift, emb_split, emb_coupling, blocks, ln_final };
    (b.params, layout)
}

/// Several molecules as one disjoint graph.
pub struct MolBatch {
    x: Array2<f64>,
    neighbors: Vec<Vec<usize>>,
    segments: Vec<(usize, usize)>,
    fp: Array2<f64>,
}

impl MolBatch {
    pub fn new(inputs: &[&MolInput]) -> MolBatch {
        let rows: usize = inputs.iter().map(|m| m.atoms.nrows()).sum();
        let feats = inputs.first().map_or(0, |m| m.atoms.ncols());
        let fp_dim = inputs.first().map_or(0, |m| m.fingerprint.len());
        let mut x = Array2::zeros((rows, feats));
        let mut fp = Array2::zeros((inputs.len(), fp_dim));
        let mut neighbors = Vec::with_capacity(rows);
        let mut segments = Vec::with_capacity(inputs.len());
        let mut start = 0;
        for (i, m) in inputs.iter().enumerate() {
            let n = m.atoms.nrows();
            x.slice_mut(s![start..start + n, ..]).assign(&m.atoms);
            neighbors.extend(m.neighbors.iter().map(|nbs| nbs.iter().map(|&j| j + start).collect::<Vec<_>>()));
            fp.row_mut(i).assign(&ndarray::ArrayView1::from(&m.fingerprint[..]));
            segments.push((start, start + n));
            start += n;
        }
        MolBatch { x, neighbors, segments, fp }
    }
}

fn neighbor_sum(h: &Array2<f64>, neighbors: &[Vec<usize>]) -> Array2<f64> {
    let mut out = Array2::zeros(h.raw_dim());
    for (i, nbs) in neighbors.iter().enumerate() {
        let mut row = out.row_mut(i);
        for &j in nbs {
            row += &h.row(j);
        }
    }
    out
}

struct GinCache {
    h_in: Array2<f64>,
    agg: Array2<f64>,
    u: Array2<f64>,
    out: Array2<f64>,
}

pub struct MolCache {
    gin: Vec<GinCache>,
    nodes: Array2<f64>,
    f1: Array2<f64>,
    concat: Array2<f64>,
    z1: Array2<f64>,
}

pub fn mol_forward(params: &ParamSet, layout: &Layout, batch: &MolBatch) -> (Array2<f64>, MolCache) {
    let p = |i: usize| params.get(i);
    let mut h = batch.x.clone();
    let mut caches = Vec::with_capacity(layout.gin.len());
    let last = layout.gin.len().saturating_sub(1);
    for (l, layer) in layout.gin.iter().enumerate() {
        let eps = p(layer.eps)[[0, 0]];
        let mut agg = neighbor_sum(&h, &batch.neighbors);
        agg.scaled_add(1.0 + eps, &h);
        let u = relu(&linear(&agg, p(layer.l1.w), p(layer.l1.b)));
        let v = linear(&u, p(layer.l2.w), p(layer.l2.b));
        let out = if l == last { v } else { relu(&v) };
        let h_in = std::mem::replace(&mut h, out.clone());
        caches.push(GinCache { h_in, agg, u, out });
    }
    let graph = segment_mean(&h, &batch.segments);
    let f1 = relu(&linear(&batch.fp, p(layout.fp1.w), p(layout.fp1.b)));
    let f2 = linear(&f1, p(layout.fp2.w), p(layout.fp2.b));
    let concat = ndarray::concatenate(ndarray::Axis(1), &[graph.view(), f2.view()]).unwrap();
    let z1 = relu(&linear(&concat, p(layout.head1.w), p(layout.head1.b)));
    let out = linear(&z1, p(layout.head2.w), p(layout.head2.b));
    (out, MolCache { gin: caches, nodes: h, f1, concat, z1 })
}

pub fn mol_backward(
    params: &ParamSet,
    layout: &Layout,
    batch: &MolBatch,
    cache: &MolCache,
    dout: &Array2<f64>,
    grads: &mut ParamSet,
) {
    let dz1 = lin_back(params, grads, layout.head2, &cache.z1, dout);
    let dz1 = relu_backward(&cache.z1, &dz1);
    let dconcat = lin_back(params, grads, layout.head1, &cache.concat, &dz1);
    let gw = cache.nodes.ncols();
    let dgraph = dconcat.slice(s![.., ..gw]).to_owned();
    let df2 = dconcat.slice(s![.., gw..]).to_owned();
    let df1 = lin_back(params, grads, layout.fp2, &cache.f1, &df2);
    let df1 = relu_backward(&cache.f1, &df1);
    // Fingerprint input needs no gradient; only parameter grads are accumulated.
    let _ = lin_back(params, grads, layout.fp1, &batch.fp, &df1);

    let mut dh = segment_mean_backward(&dgraph, &batch.segments, cache.nodes.nrows());
    let last = layout.gin.len().saturating_sub(1);
    for (l, layer) in layout.gin.iter().enumerate().rev() {
        let c = &cache.gin[l];
        let dv = if l == last { dh } else { relu_backward(&c.out, &dh) };
        let du = lin_back(params, grads, layer.l2, &c.u, &dv);
        let du = relu_backward(&c.u, &du);
        let dagg = lin_back(params, grads, layer.l1, &c.agg, &du);
        let eps = params.get(layer.eps)[[0, 0]];
        grads.get_mut(layer.eps)[[0, 0]] += (&dagg * &c.h_in).sum();
        // The adjacency is symmetric, so its transpose is itself.
        let mut dh_in = neighbor_sum(&dagg, &batch.neighbors);
        dh_in.scaled_add(1.0 + eps, &dagg);
        dh = dh_in;
    }
}

fn lin_back(params: &ParamSet, grads: &mut ParamSet, lin: Lin, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dw = std::mem::take(grads.get_mut(lin.w));
    let mut db = std::mem::take(grads.get_mut(lin.b));
    let dx = linear_backward(x, params.get(lin.w), dy, &mut dw, &mut db);
    *grads.get_mut(lin.w) = dw;
    *grads.get_mut(lin.b) = db;
    dx
}

fn norm_back(
    params: &ParamSet,
    grads: &mut ParamSet,
    norm: Norm,
    cache: &LayerNormCache,
    dy: &Array2<f64>,
) -> Array2<f64> {
    let mut dg = std::mem::take(grads.get_mut(norm.g));
    let mut db = std::mem::take(grads.get_mut(norm.b));
    let dx = layer_norm_backward(cache, params.get(norm.g), dy, &mut dg, &mut db);
    *grads.get_mut(norm.g) = dg;
    *grads.get_mut(norm.b) = db;
    dx
}

#[derive(Debug, Clone, Copy)]
enum Token {
    Carbon(u16),
    Hydrogen(HydrogenToken),
}

/// Several spectra as one row-stacked sequence with per-sample segments.
pub struct SpecBatch {
    tokens: Vec<Token>,
    segments: Vec<(usize, usize)>,
}

impl SpecBatch {
    pub fn new(inputs: &[&SpectrumTokens]) -> SpecBatch {
        let mut tokens = Vec::new();
        let mut segments = Vec::with_capacity(inputs.len());
        for t in inputs {
            let start = tokens.len();
            tokens.extend(t.carbon.iter().map(|&c| Token::Carbon(c)));
            tokens.extend(t.hydrogen.iter().map(|&h| Token::Hydrogen(h)));
            segments.push((start, tokens.len()));
        }
        SpecBatch { tokens, segments }
    }
}

struct BlockCache {
    ln1: LayerNormCache,
    a: Array2<f64>,
    qkv: Array2<f64>,
    attn: AttentionCache,
    attn_out: Array2<f64>,
    ln2: LayerNormCache,
    b: Array2<f64>,
    f1: Array2<f64>,
}

pub struct SpecCache {
    blocks: Vec<BlockCache>,
    ln_final: LayerNormCache,
    rows: usize,
}

pub fn spec_forward(
    params: &ParamSet,
    layout: &Layout,
    cfg: &ScorerConfig,
    batch: &SpecBatch,
) -> (Array2<f64>, SpecCache) {
    let p = |i: usize| params.get(i);
    let d = cfg.embed_dim;
    let mut x = Array2::zeros((batch.tokens.len(), d));
    for (r, tok) in batch.tokens.iter().enumerate() {
        let mut row = x.row_mut(r);
        match *tok {
            Token::Carbon(c) => row += &p(layout.emb_cshift).row(c as usize),
            Token::Hydrogen(h) => {
                row += &p(layout.emb_hshift).row(h.shift as usize);
                row += &p(layout.emb_split).row(h.split as usize);
                row += &p(layout.emb_coupling).row(h.coupling as usize);
            }
        }
    }
    let mut caches = Vec::with_capacity(layout.blocks.len());
    for block in &layout.blocks {
        let (a, ln1) = layer_norm(&x, p(block.ln1.g), p(block.ln1.b));
        let qkv = linear(&a, p(block.qkv.w), p(block.qkv.b));
        let (attn_out, attn) = attention(&qkv, &batch.segments, cfg.heads);
        let o = linear(&attn_out, p(block.out.w), p(block.out.b));
        x += &o;
        let (b, ln2) = layer_norm(&x, p(block.ln2.g), p(block.ln2.b));
        let f1 = relu(&linear(&b, p(block.ff1.w), p(block.ff1.b)));
        let f2 = linear(&f1, p(block.ff2.w), p(block.ff2.b));
        x += &f2;
        caches.push(BlockCache { ln1, a, qkv, attn, attn_out, ln2, b, f1 });
    }
    let (y, ln_final) = layer_norm(&x, p(layout.ln_final.g), p(layout.ln_final.b));
    let pooled = segment_mean(&y, &batch.segments);
    (pooled, SpecCache { blocks: caches, ln_final, rows: batch.tokens.len() })
}

pub fn spec_backward(
    params: &ParamSet,
    layout: &Layout,
    cfg: &ScorerConfig,
    batch: &SpecBatch,
    cache: &SpecCache,
    dout: &Array2<f64>,
    grads: &mut ParamSet,
) {
    let dy = segment_mean_backward(dout, &batch.segments, cache.rows);
    let mut dx = norm_back(params, grads, layout.ln_final, &cache.ln_final, &dy);
    for (block, c) in layout.blocks.iter().zip(&cache.blocks).rev() {
        let df1 = lin_back(params, grads, block.ff2, &c.f1, &dx);
        let df1 = relu_backward(&c.f1, &df1);
        let db = lin_back(params, grads, block.ff1, &c.b, &df1);
        dx += &norm_back(params, grads, block.ln2, &c.ln2, &db);
        let dattn = lin_back(params, grads, block.out, &c.attn_out, &dx);
        let dqkv = attention_backward(&c.qkv, &batch.segments, cfg.heads, &c.attn, &dattn);
        let da = lin_back(params, grads, block.qkv, &c.a, &dqkv);
        dx += &norm_back(params, grads, block.ln1, &c.ln1, &da);
    }
    for (r, tok) in batch.tokens.iter().enumerate() {
        let g = dx.row(r);
        match *tok {
            Token::Carbon(c) => {
                let mut t = grads.get_mut(layout.emb_cshift).row_mut(c as usize);
                t += &g;
            }
            Token::Hydrogen(h) => {
                for (table, idx) in [
                    (layout.emb_hshift, h.shift as usize),
                    (layout.emb_split, h.split as usize),
                    (layout.emb_coupling, h.coupling as usize),
                ] {
                    let mut t = grads.get_mut(table).row_mut(idx);
                    t += &g;
                }
            }
        }
    }
}

//! Dense building blocks with explicit backward passes. Backward functions
//! accumulate parameter gradients in place and return the input gradient.

use ndarray::{s, Array2, ArrayView2, Axis};

pub const LN_EPS: f64 = 1e-5;

/// `x W + b` with `b` a 1×n row.
pub fn linear(x: &Array2<f64>, w: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut y = x.dot(w);
    y += b;
    y
}

pub fn linear_backward(
    x: &Array2<f64>,
    w: &Array2<f64>,
    dy: &Array2<f64>,
    dw: &mut Array2<f64>,
    db: &mut Array2<f64>,
) -> Array2<f64> {
    ndarray::linalg::general_mat_mul(1.0, &x.t(), dy, 1.0, dw);
    *db += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    dy.dot(&w.t())
}

pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Gradient through a ReLU given its output.
pub fn relu_backward(y: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |d, &out| {
        if out <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}

pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Vec<f64>,
}

/// Row-wise layer normalization with gain `g` and bias `b` (both 1×n).
pub fn layer_norm(x: &Array2<f64>, g: &Array2<f64>, b: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
    let n = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Vec::with_capacity(x.nrows());
    for mut row in xhat.rows_mut() {
        let mean = row.sum() / n;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / n;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| v * inv);
        inv_std.push(inv);
    }
    let mut y = &xhat * g;
    y += b;
    (y, LayerNormCache { xhat, inv_std })
}

pub fn layer_norm_backward(
    cache: &LayerNormCache,
    g: &Array2<f64>,
    dy: &Array2<f64>,
    dg: &mut Array2<f64>,
    db: &mut Array2<f64>,
) -> Array2<f64> {
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let n = dy.ncols() as f64;
    let dxhat = dy * g;
    let mut dx = Array2::zeros(dy.raw_dim());
    for (r, mut out) in dx.rows_mut().into_iter().enumerate() {
        let dh = dxhat.row(r);
        let xh = cache.xhat.row(r);
        let sum_dh = dh.sum();
        let sum_dh_xh = dh.dot(&xh);
        let inv = cache.inv_std[r];
        for c in 0..out.len() {
            out[c] = inv / n * (n * dh[c] - sum_dh - xh[c] * sum_dh_xh);
        }
    }
    dx
}

/// Multi-head self-attention over independent row segments (one per sample).
/// `qkv` holds Q, K, V side by side (rows × 3d).
pub struct AttentionCache {
    probs: Vec<Vec<Array2<f64>>>,
}

pub fn attention(qkv: &Array2<f64>, segments: &[(usize, usize)], heads: usize) -> (Array2<f64>, AttentionCache) {
    let d = qkv.ncols() / 3;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = Array2::zeros((qkv.nrows(), d));
    let mut probs = Vec::with_capacity(segments.len());
    for &(start, end) in segments {
        let mut seg_probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let q = qkv.slice(s![start..end, h * dh..(h + 1) * dh]);
            let k = qkv.slice(s![start..end, d + h * dh..d + (h + 1) * dh]);
            let v = qkv.slice(s![start..end, 2 * d + h * dh..2 * d + (h + 1) * dh]);
            let mut scores = q.dot(&k.t()) * scale;
            softmax_rows(&mut scores);
            out.slice_mut(s![start..end, h * dh..(h + 1) * dh]).assign(&scores.dot(&v));
            seg_probs.push(scores);
        }
        probs.push(seg_probs);
    }
    (out, AttentionCache { probs })
}

pub fn attention_backward(
    qkv: &Array2<f64>,
    segments: &[(usize, usize)],
    heads: usize,
    cache: &AttentionCache,
    dout: &Array2<f64>,
) -> Array2<f64> {
    let d = qkv.ncols() / 3;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dqkv = Array2::zeros(qkv.raw_dim());
    for (seg, &(start, end)) in segments.iter().enumerate() {
        for h in 0..heads {
            let (qc, kc, vc) = (h * dh, d + h * dh, 2 * d + h * dh);
            let q = qkv.slice(s![start..end, qc..qc + dh]);
            let k = qkv.slice(s![start..end, kc..kc + dh]);
            let v = qkv.slice(s![start..end, vc..vc + dh]);
            let p = &cache.probs[seg][h];
            let dy: ArrayView2<f64> = dout.slice(s![start..end, h * dh..(h + 1) * dh]);
            let dp = dy.dot(&v.t());
            let dv = p.t().dot(&dy);
            let mut ds = dp;
            for (mut row, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
                let dot = row.dot(&prow);
                row.zip_mut_with(&prow, |x, &pv| *x = pv * (*x - dot));
            }
            ds *= scale;
            let dq = ds.dot(&k);
            let dk = ds.t().dot(&q);
            dqkv.slice_mut(s![start..end, qc..qc + dh]).assign(&dq);
            dqkv.slice_mut(s![start..end, kc..kc + dh]).assign(&dk);
            dqkv.slice_mut(s![start..end, vc..vc + dh]).assign(&dv);
        }
    }
    dqkv
}

fn softmax_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Row means per segment.
pub fn segment_mean(x: &Array2<f64>, segments: &[(usize, usize)]) -> Array2<f64> {
    let mut out = Array2::zeros((segments.len(), x.ncols()));
    for (i, &(start, end)) in segments.iter().enumerate() {
        let mean = x.slice(s![start..end, ..]).sum_axis(Axis(0)) / (end - start) as f64;
        out.row_mut(i).assign(&mean);
    }
    out
}

pub fn segment_mean_backward(dy: &Array2<f64>, segments: &[(usize, usize)], rows: usize) -> Array2<f64> {
    let mut dx = Array2::zeros((rows, dy.ncols()));
    for (i, &(start, end)) in segments.iter().enumerate() {
        let g = &dy.row(i) / (end - start) as f64;
        for r in start..end {
            dx.row_mut(r).assign(&g);
        }
    }
    dx
}

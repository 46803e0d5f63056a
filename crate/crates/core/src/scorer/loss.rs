use ndarray::{Array2, Axis};

use super::ScorerError;

/// Row-normalizes `h`, returning unit rows and the original norms.
fn normalize_rows(h: &Array2<f64>) -> (Array2<f64>, Vec<f64>) {
    let norms: Vec<f64> = h.rows().into_iter().map(|r| r.dot(&r).sqrt().max(f64::MIN_POSITIVE)).collect();
    let mut unit = h.clone();
    for (mut row, &n) in unit.rows_mut().into_iter().zip(&norms) {
        row /= n;
    }
    (unit, norms)
}

/// Backward through row normalization: `(I - u uᵀ) du / ‖h‖` per row.
fn normalize_rows_backward(unit: &Array2<f64>, norms: &[f64], du: &Array2<f64>) -> Array2<f64> {
    let mut dh = du.clone();
    for ((mut row, u), &n) in dh.rows_mut().into_iter().zip(unit.rows()).zip(norms) {
        let proj = row.dot(&u);
        row.scaled_add(-proj, &u);
        row /= n;
    }
    dh
}

/// Symmetric contrastive loss over a batch of paired embeddings.
///
/// Row `i` of `hm` pairs with row `i` of `hs`. The denominator for row `i`
/// sums both directions over every `k != i`. Returns the batch-mean loss and
/// its gradients with respect to `hm` and `hs`.
pub fn nt_xent(hm: &Array2<f64>, hs: &Array2<f64>, tau: f64) -> Result<(f64, Array2<f64>, Array2<f64>), ScorerError> {
    let b = hm.nrows();
    if b < 2 {
        return Err(ScorerError::BatchTooSmall(b));
    }
    if hs.nrows() != b || hs.ncols() != hm.ncols() {
        return Err(ScorerError::ShapeMismatch(format!(
            "molecule batch {:?} vs spectrum batch {:?}",
            hm.dim(),
            hs.dim()
        )));
    }
    let (m, m_norms) = normalize_rows(hm);
    let (s, s_norms) = normalize_rows(hs);
    let sim = m.dot(&s.t());
    let e = sim.mapv(|x| (x / tau).exp());
    let mut denom = vec![0.0; b];
    for i in 0..b {
        for k in 0..b {
            if k != i {
                denom[i] += e[[i, k]] + e[[k, i]];
            }
        }
    }
    let loss = (0..b).map(|i| -sim[[i, i]] / tau + denom[i].ln()).sum::<f64>() / b as f64;

    let scale = 1.0 / (b as f64 * tau);
    let mut g = Array2::zeros((b, b));
    for i in 0..b {
        for k in 0..b {
            g[[i, k]] = if i == k { -scale } else { scale * e[[i, k]] * (1.0 / denom[i] + 1.0 / denom[k]) };
        }
    }
    let dm = g.dot(&s);
    let ds = g.t().dot(&m);
    Ok((loss, normalize_rows_backward(&m, &m_norms, &dm), normalize_rows_backward(&s, &s_norms, &ds)))
}

/// Cosine similarity of each row pair.
pub fn row_cosines(a: &Array2<f64>, b: &Array2<f64>) -> Vec<f64> {
    let (ua, _) = normalize_rows(a);
    let (ub, _) = normalize_rows(b);
    (&ua * &ub).sum_axis(Axis(1)).to_vec()
}

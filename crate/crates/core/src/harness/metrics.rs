//! Per-question metrics and report aggregation.

use serde::{Deserialize, Serialize};

use crate::chem::{canonical_smiles, fingerprint_set, molecular_formula, parse_smiles, tanimoto};

use super::HarnessError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub morgan_fts: f64,
    /// Tanimoto over the native structural-key fingerprint.
    pub keys_fts: f64,
    /// Tanimoto over the native path fingerprint.
    pub path_fts: f64,
    pub formula_match: f64,
    pub exact_match: f64,
}

/// Scores a prediction against the target. An absent or unparseable
/// prediction scores zero everywhere.
pub fn compute_metrics(predicted: Option<&str>, target: &str) -> Result<Metrics, HarnessError> {
    let target = parse_smiles(target).map_err(|e| HarnessError::TargetParseError(format!("{target}: {e}")))?;
    let Some(pred) = predicted.and_then(|p| parse_smiles(p).ok()) else { return Ok(Metrics::default()) };
    let (fp, ft) = (fingerprint_set(&pred), fingerprint_set(&target));
    let fts = |a, b| tanimoto(a, b).expect("fingerprints of one kind share a length");
    let indicator = |b: bool| if b { 1.0 } else { 0.0 };
    Ok(Metrics {
        morgan_fts: fts(&fp.morgan, &ft.morgan),
        keys_fts: fts(&fp.keys, &ft.keys),
        path_fts: fts(&fp.path, &ft.path),
        formula_match: indicator(molecular_formula(&pred) == molecular_formula(&target)),
        exact_match: indicator(canonical_smiles(&pred) == canonical_smiles(&target)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub id: String,
    pub predicted: Option<String>,
    pub target: Option<String>,
    pub reward: Option<f64>,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub tokens: u64,
    pub wall_ms: u64,
    /// Set when the question failed; its metrics are then zero.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub questions: usize,
    pub failures: usize,
    pub morgan_fts: f64,
    pub keys_fts: f64,
    pub path_fts: f64,
    pub formula_acc: f64,
    pub exact_acc: f64,
    pub tokens_total: u64,
    pub tokens_mean: f64,
    pub wall_ms_mean: f64,
}

/// Arithmetic means over `rows`; all zeros for an empty slice.
pub fn aggregate(rows: &[MetricRow]) -> Aggregates {
    if rows.is_empty() {
        return Aggregates::default();
    }
    let n = rows.len() as f64;
    let mean = |f: &dyn Fn(&MetricRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let tokens_total = rows.iter().map(|r| r.tokens).sum();
    Aggregates {
        questions: rows.len(),
        failures: rows.iter().filter(|r| r.error.is_some()).count(),
        morgan_fts: mean(&|r| r.metrics.morgan_fts),
        keys_fts: mean(&|r| r.metrics.keys_fts),
        path_fts: mean(&|r| r.metrics.path_fts),
        formula_acc: mean(&|r| r.metrics.formula_match),
        exact_acc: mean(&|r| r.metrics.exact_match),
        tokens_total,
        tokens_mean: tokens_total as f64 / n,
        wall_ms_mean: mean(&|r| r.wall_ms as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(exact: f64) -> MetricRow {
        MetricRow {
            id: String::new(),
            predicted: None,
            target: None,
            reward: None,
            metrics: Metrics { exact_match: exact, ..Default::default() },
            tokens: 3,
            wall_ms: 0,
            error: None,
        }
    }

    #[test]
    fn identical_prediction_scores_one() {
        let m = compute_metrics(Some("CCC(=O)OC(=O)CC"), "CCC(=O)OC(=O)CC").unwrap();
        assert_eq!(m, Metrics { morgan_fts: 1.0, keys_fts: 1.0, path_fts: 1.0, formula_match: 1.0, exact_match: 1.0 });
    }

    #[test]
    fn equivalent_smiles_match_exactly() {
        let m = compute_metrics(Some("CCO"), "OCC").unwrap();
        assert_eq!((m.exact_match, m.formula_match), (1.0, 1.0));
    }

    #[test]
    fn isomers_share_formula_only() {
        let m = compute_metrics(Some("COC"), "CCO").unwrap();
        assert_eq!((m.exact_match, m.formula_match), (0.0, 1.0));
        assert!(m.morgan_fts < 1.0 && m.morgan_fts >= 0.0);
    }

    #[test]
    fn unparseable_prediction_is_zero() {
        assert_eq!(compute_metrics(Some("C(("), "CCO").unwrap(), Metrics::default());
        assert_eq!(compute_metrics(None, "CCO").unwrap(), Metrics::default());
        assert!(matches!(compute_metrics(Some("CCO"), "C(("), Err(HarnessError::TargetParseError(_))));
    }

    #[test]
    fn aggregate_means() {
        let a = aggregate(&[row(1.0), row(0.0), row(0.0)]);
        assert_eq!(a.exact_acc, 1.0 / 3.0);
        assert_eq!(a.tokens_total, 9);
        assert_eq!(a.tokens_mean, 3.0);
        assert_eq!(aggregate(&[]), Aggregates::default());
    }
}

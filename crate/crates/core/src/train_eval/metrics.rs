use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::pde_zoo::PdeFamily;

/// Per-sample relative L2 error in percent, `None` for a zero-norm target.
pub fn relative_l2_sample(pred: &[f64], target: &[f64]) -> Option<f64> {
    assert_eq!(pred.len(), target.len(), "relative_l2: length mismatch");
    let den = target.iter().map(|v| v * v).sum::<f64>().sqrt();
    if den == 0.0 {
        return None;
    }
    let num = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>().sqrt();
    Some(100.0 * num / den)
}

/// Per-sample `R² = 1 − ‖v − u‖² / ‖v − mean(v)‖²` with `v` the target, `None`
/// when the target has no variance.
pub fn r2_sample(pred: &[f64], target: &[f64]) -> Option<f64> {
    assert_eq!(pred.len(), target.len(), "r2_score: length mismatch");
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let tot = target.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    if tot == 0.0 {
        return None;
    }
    let res = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>();
    Some(1.0 - res / tot)
}

/// Mean of a per-sample metric plus the number of excluded samples.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SetMetric {
    pub mean: f64,
    pub count: usize,
    pub excluded: usize,
}

impl SetMetric {
    pub fn from_samples(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let (mut sum, mut count, mut excluded) = (0.0, 0, 0);
        for v in values {
            match v {
                Some(x) => {
                    sum += x;
                    count += 1;
                }
                None => excluded += 1,
            }
        }
        SetMetric {
            mean: if count > 0 { sum / count as f64 } else { f64::NAN },
            count,
            excluded,
        }
    }
}

/// Relative L2 error in percent over samples of `n` values each.
pub fn relative_l2(pred: &[f64], target: &[f64], n: usize) -> SetMetric {
    SetMetric::from_samples(pred.chunks(n).zip(target.chunks(n)).map(|(p, t)| relative_l2_sample(p, t)))
}

/// R² averaged over samples of `n` values each.
pub fn r2_score(pred: &[f64], target: &[f64], n: usize) -> SetMetric {
    SetMetric::from_samples(pred.chunks(n).zip(target.chunks(n)).map(|(p, t)| r2_sample(p, t)))
}

/// Raw per-sample outcomes collected during evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub family: PdeFamily,
    pub rel_l2: Option<f64>,
    pub r2: Option<f64>,
    /// `Some(valid)` when symbols were decoded.
    pub valid: Option<bool>,
    /// Symbol error in percent for valid decodes.
    pub symbol_error: Option<f64>,
    pub degenerate_symbol: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FamilyMetrics {
    pub n: usize,
    pub rel_l2: SetMetric,
    pub r2: SetMetric,
    pub valid_fraction: Option<f64>,
    pub symbol_error: Option<SetMetric>,
}

/// Aggregated evaluation metrics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub overall: FamilyMetrics,
    pub per_family: BTreeMap<PdeFamily, FamilyMetrics>,
    /// Valid decodes whose predicted operator vanished on the test function.
    pub degenerate_symbol: usize,
}

fn aggregate(outcomes: &[&SampleOutcome]) -> FamilyMetrics {
    let decoded: Vec<bool> = outcomes.iter().filter_map(|o| o.valid).collect();
    let valid_fraction =
        (!decoded.is_empty()).then(|| 100.0 * decoded.iter().filter(|v| **v).count() as f64 / decoded.len() as f64);
    let symbol_error = (!decoded.is_empty()).then(|| {
        SetMetric::from_samples(
            outcomes
                .iter()
                .filter(|o| o.valid == Some(true))
                .map(|o| o.symbol_error),
        )
    });
    FamilyMetrics {
        n: outcomes.len(),
        rel_l2: SetMetric::from_samples(outcomes.iter().map(|o| o.rel_l2)),
        r2: SetMetric::from_samples(outcomes.iter().map(|o| o.r2)),
        valid_fraction,
        symbol_error,
    }
}

impl MetricReport {
    pub fn from_outcomes(outcomes: &[SampleOutcome]) -> Self {
        let all: Vec<&SampleOutcome> = outcomes.iter().collect();
        let mut per_family = BTreeMap::new();
        for fam in outcomes.iter().map(|o| o.family).collect::<std::collections::BTreeSet<_>>() {
            let sub: Vec<&SampleOutcome> = outcomes.iter().filter(|o| o.family == fam).collect();
            per_family.insert(fam, aggregate(&sub));
        }
        MetricReport {
            overall: aggregate(&all),
            per_family,
            degenerate_symbol: outcomes.iter().filter(|o| o.degenerate_symbol).count(),
        }
    }

    pub fn rel_l2(&self) -> f64 {
        self.overall.rel_l2.mean
    }

    pub fn r2(&self) -> f64 {
        self.overall.r2.mean
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 of a predicted positive set. Both slices must be
/// free of duplicates; order does not matter.
pub fn attack_f1(predicted: &[usize], truth: &[usize]) -> Result<AttackMetrics> {
    if truth.is_empty() {
        return Err(Error::Argument("attack_f1 needs a non-empty truth set".into()));
    }
    let mut t = truth.to_vec();
    t.sort_unstable();
    let hits = predicted.iter().filter(|i| t.binary_search(i).is_ok()).count() as f64;
    let precision = if predicted.is_empty() { 0.0 } else { hits / predicted.len() as f64 };
    let recall = hits / truth.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(AttackMetrics { precision, recall, f1 })
}

/// Per-user mean (macro average) of a set of metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub users: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub f1_std: f64,
}

pub fn macro_average(metrics: &[AttackMetrics]) -> MacroMetrics {
    let n = metrics.len();
    if n == 0 {
        return MacroMetrics {
            users: 0,
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            f1_std: 0.0,
        };
    }
    let nf = n as f64;
    let f1 = metrics.iter().map(|m| m.f1).sum::<f64>() / nf;
    let var = metrics.iter().map(|m| (m.f1 - f1).powi(2)).sum::<f64>() / nf;
    MacroMetrics {
        users: n,
        precision: metrics.iter().map(|m| m.precision).sum::<f64>() / nf,
        recall: metrics.iter().map(|m| m.recall).sum::<f64>() / nf,
        f1,
        f1_std: var.sqrt(),
    }
}

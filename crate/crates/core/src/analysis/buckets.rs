use serde::{Deserialize, Serialize};

use crate::data::BucketMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub bucket: usize,
    pub users: usize,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketedF1 {
    /// Non-empty buckets in ascending interaction order.
    pub rows: Vec<BucketRow>,
    /// Buckets with no scored users.
    pub omitted: Vec<usize>,
    /// Spearman correlation between bucket position and mean F1; `None` with
    /// fewer than two rows or constant values.
    pub spearman: Option<f64>,
}

/// Mean F1 per interaction bucket from `(user, f1)` pairs.
pub fn bucketed_f1(results: &[(usize, f64)], map: &BucketMap) -> Result<BucketedF1> {
    let mut sums = vec![(0usize, 0.0f64); map.len()];
    for &(user, f1) in results {
        let b = map
            .bucket_of(user)
            .ok_or_else(|| Error::Argument(format!("user {user} has no bucket")))?;
        sums[b].0 += 1;
        sums[b].1 += f1;
    }
    let mut rows = Vec::new();
    let mut omitted = Vec::new();
    for (bucket, &(n, s)) in sums.iter().enumerate() {
        if n == 0 {
            omitted.push(bucket);
        } else {
            rows.push(BucketRow {
                bucket,
                users: n,
                mean_f1: s / n as f64,
            });
        }
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.bucket as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_f1).collect();
    Ok(BucketedF1 {
        spearman: spearman(&xs, &ys),
        rows,
        omitted,
    })
}

/// Average ranks, ties sharing the mean of their positions.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation: Pearson correlation of the average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

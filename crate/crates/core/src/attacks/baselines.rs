use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sq_euclidean, Matrix, RngStream};

/// `ceil(p * n)`, robust to `p * n` landing a hair above an integer.
pub fn positive_quota(p: f64, n: usize) -> usize {
    let q = (p * n as f64 - 1e-9).ceil();
    (q.max(0.0) as usize).min(n)
}

/// Uniform guess of `ceil(p * |touched|)` positives, ascending.
pub fn random_attack(touched: &[usize], p: f64, rng: &mut RngStream) -> Result<Vec<usize>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Argument(format!("positive fraction {p} outside (0, 1]")));
    }
    let mut out = rng.choose(touched, positive_quota(p, touched.len()));
    out.sort_unstable();
    Ok(out)
}

/// Labels for `touched` with `ceil(p * n)` positives drawn by weighted
/// sampling without replacement: items in `popular` carry weight `boost`,
/// the rest weight 1. Implemented with exponential keys (Efraimidis and
/// Spirakis), which is equivalent to drawing one item at a time with
/// probability proportional to its weight.
pub fn popularity_informed_assign(
    touched: &[usize],
    p: f64,
    popular: &[usize],
    boost: f64,
    rng: &mut RngStream,
) -> Result<Vec<u8>> {
    if !(boost > 0.0) {
        return Err(Error::Argument(format!("boost must be positive, got {boost}")));
    }
    let quota = positive_quota(p, touched.len());
    let mut keys: Vec<(f64, usize)> = touched
        .iter()
        .enumerate()
        .map(|(k, item)| {
            let w = if popular.binary_search(item).is_ok() { boost } else { 1.0 };
            // ln(u) / w orders like u^(1/w); u is in (0, 1].
            let u = 1.0 - rng.uniform();
            (u.ln() / w, k)
        })
        .collect();
    keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut labels = vec![0u8; touched.len()];
    for &(_, k) in keys.iter().take(quota) {
        labels[k] = 1;
    }
    Ok(labels)
}

/// Uniform labels with `ceil(p * n)` positives.
pub fn uniform_assign(n: usize, p: f64, rng: &mut RngStream) -> Vec<u8> {
    let mut labels = vec![0u8; n];
    for k in rng.sample_indices(n, positive_quota(p, n)) {
        labels[k] = 1;
    }
    labels
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansOutcome {
    /// Members of the lower-SSE cluster, ascending.
    pub predicted: Vec<usize>,
    /// Set when every row was identical and no real split exists.
    pub degenerate: bool,
    pub iterations: usize,
    pub sse: [f64; 2],
}

pub const KMEANS_MAX_ITERATIONS: usize = 100;
pub const KMEANS_TOLERANCE: f64 = 1e-6;
pub const KMEANS_RESTARTS: usize = 10;

struct Clustering {
    assign: Vec<usize>,
    sse: [f64; 2],
    iterations: usize,
}

fn lloyd(rows: &Matrix, mut centroids: [Vec<f64>; 2]) -> Clustering {
    let n = rows.rows();
    let d = rows.cols();
    let mut assign = vec![0usize; n];
    let mut iterations = 0;
    loop {
        for (r, a) in assign.iter_mut().enumerate() {
            let x = rows.row(r);
            *a = usize::from(sq_euclidean(x, &centroids[1]) < sq_euclidean(x, &centroids[0]));
        }
        iterations += 1;
        let mut next = [vec![0.0; d], vec![0.0; d]];
        let mut counts = [0usize; 2];
        for (r, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for (c, x) in next[a].iter_mut().zip(rows.row(r)) {
                *c += x;
            }
        }
        for c in 0..2 {
            if counts[c] == 0 {
                // Reseed an empty cluster at the point farthest from the other centroid.
                let other = &centroids[1 - c];
                let far = (0..n)
                    .max_by(|&a, &b| sq_euclidean(rows.row(a), other).total_cmp(&sq_euclidean(rows.row(b), other)))
                    .expect("non-empty");
                next[c] = rows.row(far).to_vec();
            } else {
                let inv = 1.0 / counts[c] as f64;
                next[c].iter_mut().for_each(|x| *x *= inv);
            }
        }
        let moved = (0..2)
            .map(|c| sq_euclidean(&next[c], &centroids[c]).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if moved < KMEANS_TOLERANCE || iterations >= KMEANS_MAX_ITERATIONS {
            break;
        }
    }
    for (r, a) in assign.iter_mut().enumerate() {
        let x = rows.row(r);
        *a = usize::from(sq_euclidean(x, &centroids[1]) < sq_euclidean(x, &centroids[0]));
    }
    let mut sse = [0.0; 2];
    for (r, &a) in assign.iter().enumerate() {
        sse[a] += sq_euclidean(rows.row(r), &centroids[a]);
    }
    Clustering { assign, sse, iterations }
}

/// Two-cluster k-means over the uploaded rows; the lower-SSE cluster is the
/// guess. Runs [`KMEANS_RESTARTS`] k-means++ seedings and keeps the lowest
/// total SSE. Equal SSEs go to the cluster holding the lowest item id.
pub fn kmeans_attack(rows: &Matrix, touched: &[usize], rng: &mut RngStream) -> Result<KMeansOutcome> {
    let n = rows.rows();
    if n != touched.len() {
        return Err(Error::shape("kmeans rows", touched.len(), n));
    }
    if n < 2 {
        return Err(Error::Argument("k-means needs at least two rows".into()));
    }
    let mut best: Option<Clustering> = None;
    for _ in 0..KMEANS_RESTARTS {
        let first = rng.below(n);
        let d2: Vec<f64> = (0..n).map(|r| sq_euclidean(rows.row(r), rows.row(first))).collect();
        let total: f64 = d2.iter().sum();
        if total == 0.0 {
            let mut predicted: Vec<usize> = touched[..n / 2].to_vec();
            predicted.sort_unstable();
            return Ok(KMeansOutcome {
                predicted,
                degenerate: true,
                iterations: 0,
                sse: [0.0, 0.0],
            });
        }
        let mut target = rng.uniform() * total;
        let mut second = n - 1;
        for (r, &w) in d2.iter().enumerate() {
            if w > 0.0 && target < w {
                second = r;
                break;
            }
            target -= w;
        }
        if d2[second] == 0.0 {
            second = (0..n).rev().find(|&r| d2[r] > 0.0).expect("positive mass");
        }
        let c = lloyd(rows, [rows.row(first).to_vec(), rows.row(second).to_vec()]);
        let better = best
            .as_ref()
            .is_none_or(|b| c.sse[0] + c.sse[1] < b.sse[0] + b.sse[1]);
        if better {
            best = Some(c);
        }
    }
    let best = best.expect("at least one restart");
    let lowest_id = |c: usize| {
        (0..n)
            .filter(|&r| best.assign[r] == c)
            .map(|r| touched[r])
            .min()
            .unwrap_or(usize::MAX)
    };
    let pick = if best.sse[0] < best.sse[1] {
        0
    } else if best.sse[1] < best.sse[0] {
        1
    } else if lowest_id(0) <= lowest_id(1) {
        0
    } else {
        1
    };
    let mut predicted: Vec<usize> = (0..n).filter(|&r| best.assign[r] == pick).map(|r| touched[r]).collect();
    predicted.sort_unstable();
    Ok(KMeansOutcome {
        predicted,
        degenerate: false,
        iterations: best.iterations,
        sse: best.sse,
    })
}

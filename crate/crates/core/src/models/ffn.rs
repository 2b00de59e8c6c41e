//! The scoring head `σ(hᵀ FFN([u, v]))` with ReLU hidden layers, batched.

use crate::error::{Error, Result};
use crate::numerics::{gemm, sigmoid, Matrix, Op};

/// Activations kept for the backward pass.
pub(crate) struct HeadCache {
    input: Matrix,
    /// Post-ReLU activations per hidden layer.
    hidden: Vec<Matrix>,
    pub logits: Vec<f64>,
}

fn layer_count(dense: &[Matrix]) -> usize {
    (dense.len() - 1) / 2
}

/// Forward pass over rows of `input` (`[u, v]` concatenations).
pub(crate) fn head_forward(dense: &[Matrix], input: Matrix) -> Result<HeadCache> {
    let layers = layer_count(dense);
    let batch = input.rows();
    let mut hidden: Vec<Matrix> = Vec::with_capacity(layers);
    for l in 0..layers {
        let w = &dense[2 * l];
        let b = &dense[2 * l + 1];
        let prev = if l == 0 { &input } else { &hidden[l - 1] };
        let mut z = Matrix::zeros(batch, w.rows());
        gemm(1.0, prev, Op::N, w, Op::T, 0.0, &mut z)?;
        let bias = b.as_slice();
        for r in 0..batch {
            for (x, &bb) in z.row_mut(r).iter_mut().zip(bias) {
                let v = *x + bb;
                *x = if v > 0.0 { v } else { 0.0 };
            }
        }
        hidden.push(z);
    }
    let h = dense[dense.len() - 1].as_slice();
    let last = if layers == 0 { &input } else { &hidden[layers - 1] };
    if last.cols() != h.len() {
        return Err(Error::shape("output vector h", last.cols(), h.len()));
    }
    let logits = (0..batch)
        .map(|r| last.row(r).iter().zip(h).map(|(a, b)| a * b).sum())
        .collect();
    Ok(HeadCache {
        input,
        hidden,
        logits,
    })
}

pub(crate) fn head_scores(dense: &[Matrix], input: Matrix) -> Result<Vec<f64>> {
    Ok(head_forward(dense, input)?.logits.into_iter().map(sigmoid).collect())
}

/// Accumulates parameter gradients into `grads` (same layout as `dense`) and
/// returns the gradient with respect to the input rows.
pub(crate) fn head_backward(
    dense: &[Matrix],
    cache: &HeadCache,
    dlogits: &[f64],
    grads: &mut [Matrix],
) -> Result<Matrix> {
    let layers = layer_count(dense);
    let batch = cache.input.rows();
    let h = &dense[dense.len() - 1];
    let last = if layers == 0 { &cache.input } else { &cache.hidden[layers - 1] };

    // d h = lastᵀ dlogits
    {
        let gh = grads[dense.len() - 1].as_mut_slice();
        for (r, &d) in dlogits.iter().enumerate().take(batch) {
            if d != 0.0 {
                for (g, a) in gh.iter_mut().zip(last.row(r)) {
                    *g += d * a;
                }
            }
        }
    }
    // upstream gradient at the last activation
    let mut upstream = Matrix::zeros(batch, h.cols());
    for (r, &d) in dlogits.iter().enumerate().take(batch) {
        for (u, &hv) in upstream.row_mut(r).iter_mut().zip(h.as_slice()) {
            *u = d * hv;
        }
    }
    for l in (0..layers).rev() {
        let act = &cache.hidden[l];
        // ReLU mask: activation > 0 iff pre-activation > 0
        for (u, &a) in upstream.as_mut_slice().iter_mut().zip(act.as_slice()) {
            if a <= 0.0 {
                *u = 0.0;
            }
        }
        let prev = if l == 0 { &cache.input } else { &cache.hidden[l - 1] };
        gemm(1.0, &upstream, Op::T, prev, Op::N, 1.0, &mut grads[2 * l])?;
        {
            let gb = grads[2 * l + 1].as_mut_slice();
            for r in 0..batch {
                for (g, u) in gb.iter_mut().zip(upstream.row(r)) {
                    *g += u;
                }
            }
        }
        let w = &dense[2 * l];
        let mut down = Matrix::zeros(batch, w.cols());
        gemm(1.0, &upstream, Op::N, w, Op::N, 0.0, &mut down)?;
        upstream = down;
    }
    Ok(upstream)
}

/// Builds `[user, item_row]` input rows.
pub(crate) fn concat_inputs(user: &[f64], items: &Matrix, rows: &[usize]) -> Matrix {
    let d = user.len();
    let mut x = Matrix::zeros(rows.len(), 2 * d);
    for (b, &r) in rows.iter().enumerate() {
        let dst = x.row_mut(b);
        dst[..d].copy_from_slice(user);
        dst[d..].copy_from_slice(items.row(r));
    }
    x
}

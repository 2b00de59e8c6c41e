use serde::{Deserialize, Serialize};

use super::params::PublicParams;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const CLAMP: f64 = 1e-12;

/// Summed binary cross-entropy of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecLoss {
    pub value: f64,
    /// Scores that had to be clamped away from 0 or 1.
    pub clamped: usize,
}

/// `-Σ [r log ŷ + (1 - r) log(1 - ŷ)]` over the batch.
pub fn rec_loss(scores: &[f64], labels: &[u8]) -> Result<RecLoss> {
    if scores.len() != labels.len() {
        return Err(Error::shape("rec_loss", scores.len(), labels.len()));
    }
    let mut value = 0.0;
    let mut clamped = 0;
    for (&y, &r) in scores.iter().zip(labels) {
        let mut p = y;
        if !(CLAMP..=1.0 - CLAMP).contains(&p) {
            clamped += 1;
            p = p.clamp(CLAMP, 1.0 - CLAMP);
        }
        value -= if r == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(RecLoss { value, clamped })
}

/// Which public blocks the proximal term covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyScope {
    /// Item embeddings and the scoring network.
    AllPublic,
    #[default]
    ItemsOnly,
}

/// How the distance to the global parameters enters the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyNorm {
    /// `μ ||V_local - V_global||²`.
    #[default]
    Squared,
    /// `μ ||V_local - V_global||`, with a zero subgradient at the anchor.
    Plain,
}

/// The client-side proximal defense on the public parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Defense {
    pub mu: f64,
    #[serde(default)]
    pub scope: PenaltyScope,
    #[serde(default)]
    pub norm: PenaltyNorm,
}

impl Defense {
    pub fn new(mu: f64) -> Self {
        Defense {
            mu,
            scope: PenaltyScope::default(),
            norm: PenaltyNorm::default(),
        }
    }
}

/// Squared Frobenius distance between two public blocks under `scope`.
pub fn public_sq_dist(local: &PublicParams, global: &PublicParams, scope: PenaltyScope) -> Result<f64> {
    let mut total = local.items.sq_dist(&global.items)?;
    if scope == PenaltyScope::AllPublic {
        if local.dense.len() != global.dense.len() {
            return Err(Error::shape("dense block count", global.dense.len(), local.dense.len()));
        }
        for (a, b) in local.dense.iter().zip(&global.dense) {
            total += a.sq_dist(b)?;
        }
    }
    Ok(total)
}

/// `rec + μ ||V_local - V_global||²`.
pub fn defended_loss(rec: f64, local: &PublicParams, global: &PublicParams, mu: f64, scope: PenaltyScope) -> Result<f64> {
    if !(mu >= 0.0) {
        return Err(Error::Argument(format!("μ must be >= 0, got {mu}")));
    }
    Ok(rec + mu * public_sq_dist(local, global, scope)?)
}

/// Adds `scale * (local - global)` to `grad`.
pub(crate) fn add_penalty_grad(grad: &mut Matrix, local: &Matrix, global: &Matrix, scale: f64) {
    for ((g, l), r) in grad.as_mut_slice().iter_mut().zip(local.as_slice()).zip(global.as_slice()) {
        *g += scale * (l - r);
    }
}

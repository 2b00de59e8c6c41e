//! Server-side inference attacks on archived uploads.
//!
//! Every attack here takes only what a curious server holds: uploads, the
//! parameters it broadcast, protocol hyperparameters and optional public
//! statistics. Client labels enter only through scoring in [`crate::analysis`].

mod baselines;
mod flip;
mod imia;

pub use baselines::{
    kmeans_attack, popularity_informed_assign, positive_quota, random_attack, uniform_assign, KMeansOutcome,
    KMEANS_MAX_ITERATIONS, KMEANS_RESTARTS, KMEANS_TOLERANCE,
};
pub use flip::{flip_inference_trial, FlipTrial};
pub use imia::{imia_attack, train_shadow, AttackConfig, AttackResult, ClusterInput, PopularityPrior, ShadowRun};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::Execution;
use crate::federation::{RoundTrace, TrainHyper, UploadRecord};
use crate::models::PublicParams;
use crate::numerics::{Matrix, RngStream};

/// Items an upload touched: the rows actually transmitted.
pub fn touched_items(upload: &UploadRecord, _global: &PublicParams) -> Vec<usize> {
    upload.item_ids.clone()
}

/// Uploaded rows minus the broadcast rows they started from.
pub fn upload_deltas(upload: &UploadRecord, global: &PublicParams) -> Matrix {
    let mut delta = upload.rows.clone();
    for (k, &i) in upload.item_ids.iter().enumerate() {
        for (d, g) in delta.row_mut(k).iter_mut().zip(global.items.row(i)) {
            *d -= g;
        }
    }
    delta
}

/// Touched items recovered from row deltas against the broadcast parameters:
/// rows that changed. Untrained rows are invisible to this view.
pub fn changed_items(upload: &UploadRecord, global: &PublicParams) -> Vec<usize> {
    upload
        .item_ids
        .iter()
        .enumerate()
        .filter(|&(k, &i)| upload.rows.row(k) != global.items.row(i))
        .map(|(_, &i)| i)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Random,
    Kmeans,
    Imia,
}

impl AttackKind {
    pub const ALL: [AttackKind; 3] = [AttackKind::Random, AttackKind::Kmeans, AttackKind::Imia];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Random => "random",
            AttackKind::Kmeans => "kmeans",
            AttackKind::Imia => "imia",
        }
    }
}

/// Predicted positives for one upload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub user: usize,
    pub touched: usize,
    pub predicted: Vec<usize>,
    pub iterations: usize,
    pub complete: bool,
}

/// Runs `kind` against every upload of `trace`, in parallel over users. Each
/// user's randomness is the stream `<kind>:<user>` under `seed`.
pub fn attack_trace(
    trace: &RoundTrace,
    kind: AttackKind,
    cfg: &AttackConfig,
    hyper: &TrainHyper,
    popular: Option<&[usize]>,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Prediction>> {
    cfg.validate()?;
    let p = cfg.neg_ratio.positive_fraction();
    exec.map(&trace.uploads, |up| -> Result<Prediction> {
        let mut rng = RngStream::new(seed, format!("{}:{}", kind.name(), up.user));
        let touched = touched_items(up, &trace.before);
        Ok(match kind {
            AttackKind::Random => Prediction {
                user: up.user,
                touched: touched.len(),
                predicted: random_attack(&touched, p, &mut rng)?,
                iterations: 1,
                complete: true,
            },
            AttackKind::Kmeans => {
                let out = match cfg.kmeans_input {
                    ClusterInput::Delta => kmeans_attack(&upload_deltas(up, &trace.before), &touched, &mut rng)?,
                    ClusterInput::Upload => kmeans_attack(&up.rows, &touched, &mut rng)?,
                };
                Prediction {
                    user: up.user,
                    touched: touched.len(),
                    predicted: out.predicted,
                    iterations: out.iterations,
                    complete: !out.degenerate,
                }
            }
            AttackKind::Imia => {
                let r = imia_attack(up, &trace.before, &trace.model, cfg, hyper, popular, &rng)?;
                Prediction {
                    user: r.user,
                    touched: r.touched,
                    predicted: r.predicted_positive,
                    iterations: r.iterations,
                    complete: r.complete,
                }
            }
        })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelConfig;

    #[test]
    fn transmitted_view_is_authoritative() {
        let cfg = ModelConfig::tiny(crate::models::ModelKind::Ncf, 2, 2);
        let global = PublicParams::init(&cfg, 10, &mut RngStream::new(1, "g")).unwrap();
        let up = UploadRecord {
            round: 0,
            user: 0,
            item_ids: vec![2, 7],
            rows: global.items.select_rows(&[2, 7]),
            dense: global.dense.clone(),
            post_ldp: false,
        };
        assert_eq!(touched_items(&up, &global), vec![2, 7]);
        assert!(changed_items(&up, &global).is_empty());
        let mut moved = up.clone();
        moved.rows = Matrix::from_rows(&[vec![9.0, 9.0], global.items.row(7).to_vec()]).unwrap();
        assert_eq!(changed_items(&moved, &global), vec![2]);
        let delta = upload_deltas(&moved, &global);
        assert_eq!(delta.row(1), &[0.0, 0.0]);
        assert_eq!(delta.row(0)[0], 9.0 - global.items.get(2, 0));
    }
}

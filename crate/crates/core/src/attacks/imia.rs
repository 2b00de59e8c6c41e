use serde::{Deserialize, Serialize};

use super::baselines::{popularity_informed_assign, positive_quota, uniform_assign};
use crate::data::NegativeRatio;
use crate::error::{Error, Result};
use crate::federation::{TrainHyper, UploadRecord};
use crate::models::{train_on_labels, ModelConfig, PrivateParams, PublicParams};
use crate::numerics::{euclidean_dist, Matrix, RngStream};

/// Popular items get `boost` times the weight of other items when guessing
/// positives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopularityPrior {
    /// Share of the catalog, by training popularity, treated as popular.
    pub top_fraction: f64,
    pub boost: f64,
}

impl Default for PopularityPrior {
    fn default() -> Self {
        PopularityPrior {
            top_fraction: 0.1,
            boost: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    /// Share of touched items fixed per iteration.
    pub gamma: f64,
    pub neg_ratio: NegativeRatio,
    pub max_iterations: usize,
    /// Local epochs for shadow models; `None` uses the protocol's value.
    pub shadow_epochs: Option<usize>,
    pub popularity: Option<PopularityPrior>,
    /// Keep every shadow run in the result.
    pub record_shadows: bool,
    /// What the K-means baseline clusters.
    pub kmeans_input: ClusterInput,
}

/// Row representation handed to the K-means baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterInput {
    /// Each uploaded row minus the broadcast row: this round's update.
    #[default]
    Delta,
    /// The uploaded rows as transmitted.
    Upload,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            gamma: 0.2,
            neg_ratio: NegativeRatio::DEFAULT,
            max_iterations: 50,
            shadow_epochs: None,
            popularity: None,
            record_shadows: false,
            kmeans_input: ClusterInput::Delta,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Argument(format!("γ must be in (0, 1], got {}", self.gamma)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Argument("max_iterations must be at least 1".into()));
        }
        if let Some(p) = self.popularity {
            if !(p.top_fraction > 0.0 && p.top_fraction <= 1.0) || !(p.boost > 0.0) {
                return Err(Error::Argument(format!("invalid popularity prior {p:?}")));
            }
        }
        Ok(())
    }

    /// Items fixed per iteration: `floor(γ n)`, at least 1.
    pub fn per_iteration(&self, n: usize) -> usize {
        ((self.gamma * n as f64 + 1e-9).floor() as usize).clamp(1, n.max(1))
    }
}

/// One shadow model fitted during an attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowRun {
    pub iteration: usize,
    /// Label per touched item (fixed items keep their fixed label).
    pub assignment: Vec<u8>,
    pub rows: Matrix,
    /// Distance per touched item between shadow and uploaded rows.
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub user: usize,
    pub touched: usize,
    pub predicted_positive: Vec<usize>,
    pub predicted_negative: Vec<usize>,
    pub iterations: usize,
    pub fixed_per_iteration: Vec<usize>,
    /// False when the positive quota was not met by fixing alone.
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shadows: Vec<ShadowRun>,
}

/// Item rows of a model trained from the broadcast parameters on a guessed
/// labeling, with a fresh private embedding.
#[allow(clippy::too_many_arguments)]
pub fn train_shadow(
    model: &ModelConfig,
    user: usize,
    touched: &[usize],
    labels: &[u8],
    global: &PublicParams,
    hyper: &TrainHyper,
    epochs: usize,
    rng: &RngStream,
) -> Result<Matrix> {
    let private = PrivateParams::init(model, &mut rng.derive("private"));
    let hyper = TrainHyper {
        local_epochs: epochs,
        ..hyper.clone()
    };
    let out = train_on_labels(model, user, touched, labels, global, &private, &hyper, None, &mut rng.derive("shuffle"))?;
    Ok(out.upload.rows)
}

/// Interaction-level membership inference against one upload.
///
/// Uses only what the server holds: the upload, the parameters it broadcast
/// that round, the protocol hyperparameters and, optionally, a set of
/// popular items (ascending).
pub fn imia_attack(
    upload: &UploadRecord,
    global: &PublicParams,
    model: &ModelConfig,
    cfg: &AttackConfig,
    hyper: &TrainHyper,
    popular: Option<&[usize]>,
    rng: &RngStream,
) -> Result<AttackResult> {
    cfg.validate()?;
    let touched = &upload.item_ids;
    let n = touched.len();
    if upload.rows.rows() != n {
        return Err(Error::shape("upload rows", n, upload.rows.rows()));
    }
    let p = cfg.neg_ratio.positive_fraction();
    let quota = positive_quota(p, n);
    let per_iter = cfg.per_iteration(n);
    let epochs = cfg.shadow_epochs.unwrap_or(hyper.local_epochs);

    let mut fixed: Vec<Option<u8>> = vec![None; n];
    let mut fixed_pos = 0;
    let mut fixed_per_iteration = Vec::new();
    let mut shadows = Vec::new();
    let mut last: Option<(Vec<u8>, Vec<f64>)> = None;

    for iter in 0..cfg.max_iterations {
        if fixed_pos >= quota {
            break;
        }
        let unfixed: Vec<usize> = (0..n).filter(|&k| fixed[k].is_none()).collect();
        if unfixed.is_empty() {
            break;
        }
        let mut assign_rng = rng.derive(&format!("assign:{iter}"));
        let guess = match (popular, cfg.popularity) {
            (Some(pop), Some(prior)) => {
                let items: Vec<usize> = unfixed.iter().map(|&k| touched[k]).collect();
                popularity_informed_assign(&items, p, pop, prior.boost, &mut assign_rng)?
            }
            _ => uniform_assign(unfixed.len(), p, &mut assign_rng),
        };
        let mut labels: Vec<u8> = fixed.iter().map(|f| f.unwrap_or(0)).collect();
        for (&k, &l) in unfixed.iter().zip(&guess) {
            labels[k] = l;
        }

        let rows = train_shadow(model, upload.user, touched, &labels, global, hyper, epochs, &rng.derive(&format!("shadow:{iter}")))?;
        let mut distances = vec![0.0; n];
        for &k in &unfixed {
            distances[k] = euclidean_dist(rows.row(k), upload.rows.row(k))?;
        }
        let mut order = unfixed.clone();
        order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(touched[a].cmp(&touched[b])));

        let mut count = 0;
        for &k in &order {
            if count == per_iter {
                break;
            }
            if labels[k] == 1 {
                if fixed_pos == quota {
                    continue;
                }
                fixed_pos += 1;
            }
            fixed[k] = Some(labels[k]);
            count += 1;
        }
        fixed_per_iteration.push(count);
        if cfg.record_shadows {
            shadows.push(ShadowRun {
                iteration: iter,
                assignment: labels.clone(),
                rows,
                distances: distances.clone(),
            });
        }
        last = Some((labels, distances));
    }

    let complete = fixed_pos >= quota;
    let mut positive: Vec<usize> = (0..n).filter(|&k| fixed[k] == Some(1)).collect();
    if !complete {
        if let Some((labels, distances)) = &last {
            let mut extra: Vec<usize> = (0..n).filter(|&k| fixed[k].is_none() && labels[k] == 1).collect();
            extra.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(touched[a].cmp(&touched[b])));
            positive.extend(extra.into_iter().take(quota - fixed_pos));
        }
    }
    let mut is_pos = vec![false; n];
    for &k in &positive {
        is_pos[k] = true;
    }
    Ok(AttackResult {
        user: upload.user,
        touched: n,
        predicted_positive: (0..n).filter(|&k| is_pos[k]).map(|k| touched[k]).collect(),
        predicted_negative: (0..n).filter(|&k| !is_pos[k]).map(|k| touched[k]).collect(),
        iterations: fixed_per_iteration.len(),
        fixed_per_iteration,
        complete,
        shadows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::attack_f1;
    use crate::attacks::random_attack;
    use crate::models::{local_train, ModelKind};

    fn world(seed: u64) -> (ModelConfig, PublicParams, TrainHyper) {
        let cfg = ModelConfig::tiny(ModelKind::Ncf, 8, 8);
        let mut global = PublicParams::init(&cfg, 40, &mut RngStream::new(seed, "world")).unwrap();
        // Dense weights at the scale of a trained model, not a fresh init.
        for m in &mut global.dense {
            m.scale(10.0);
        }
        let hyper = TrainHyper {
            lr: 0.01,
            local_epochs: 10,
            batch_size: 16,
            ..TrainHyper::default()
        };
        (cfg, global, hyper)
    }

    fn upload_for(cfg: &ModelConfig, global: &PublicParams, hyper: &TrainHyper, touched: &[usize], labels: &[u8], seed: u64) -> UploadRecord {
        let private = PrivateParams::init(cfg, &mut RngStream::new(seed, "victim"));
        let out = train_on_labels(cfg, 0, touched, labels, global, &private, hyper, None, &mut RngStream::new(seed, "victim-shuffle")).unwrap();
        UploadRecord::new(0, 0, out.upload)
    }

    #[test]
    fn quota_met_in_one_iteration_for_five_items() {
        let (cfg, global, hyper) = world(1);
        let touched = vec![3, 8, 11, 20, 31];
        let labels = vec![0, 1, 0, 0, 0];
        let up = upload_for(&cfg, &global, &hyper, &touched, &labels, 1);
        let ac = AttackConfig::default();
        let r = imia_attack(&up, &global, &cfg, &ac, &hyper, None, &RngStream::new(2, "imia")).unwrap();
        assert_eq!(r.predicted_positive.len(), 1);
        assert_eq!(r.predicted_positive.len() + r.predicted_negative.len(), 5);
        if r.iterations == 1 {
            assert!(r.complete);
        }
        assert!(r.fixed_per_iteration.iter().all(|&c| c >= 1));
    }

    #[test]
    fn result_partitions_touched_items_and_meets_quota() {
        let (cfg, global, hyper) = world(3);
        let touched: Vec<usize> = (0..40).step_by(2).collect();
        let labels: Vec<u8> = (0..20).map(|k| u8::from(k % 5 == 0)).collect();
        let up = upload_for(&cfg, &global, &hyper, &touched, &labels, 3);
        let ac = AttackConfig {
            record_shadows: true,
            ..Default::default()
        };
        let r = imia_attack(&up, &global, &cfg, &ac, &hyper, None, &RngStream::new(2, "imia")).unwrap();
        assert!(r.complete);
        assert_eq!(r.predicted_positive.len(), positive_quota(0.2, 20));
        let mut all: Vec<usize> = r.predicted_positive.iter().chain(&r.predicted_negative).copied().collect();
        all.sort_unstable();
        assert_eq!(all, touched);
        // Fixed items keep their label in later iterations.
        for w in r.shadows.windows(2) {
            for k in 0..20 {
                if w[0].distances[k] > 0.0 && w[1].distances[k] == 0.0 {
                    assert_eq!(w[0].assignment[k], w[1].assignment[k]);
                }
            }
        }
        assert!(r.shadows.iter().all(|s| s.distances.iter().all(|&d| d >= 0.0)));
    }

    #[test]
    fn deterministic_under_fixed_streams() {
        let (cfg, global, hyper) = world(5);
        let touched: Vec<usize> = (0..20).collect();
        let labels: Vec<u8> = (0..20).map(|k| u8::from(k < 4)).collect();
        let up = upload_for(&cfg, &global, &hyper, &touched, &labels, 5);
        let ac = AttackConfig::default();
        let a = imia_attack(&up, &global, &cfg, &ac, &hyper, None, &RngStream::new(9, "imia")).unwrap();
        let b = imia_attack(&up, &global, &cfg, &ac, &hyper, None, &RngStream::new(9, "imia")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_epoch_shadow_returns_broadcast_rows() {
        let (cfg, global, hyper) = world(6);
        let touched = vec![1, 5, 9];
        let rows = train_shadow(&cfg, 0, &touched, &[1, 0, 0], &global, &hyper, 0, &RngStream::new(1, "s")).unwrap();
        assert_eq!(rows, global.items.select_rows(&touched));
        let again = train_shadow(&cfg, 0, &touched, &[1, 0, 0], &global, &hyper, 3, &RngStream::new(1, "s")).unwrap();
        let twice = train_shadow(&cfg, 0, &touched, &[1, 0, 0], &global, &hyper, 3, &RngStream::new(1, "s")).unwrap();
        assert_eq!(again, twice);
    }

    #[test]
    fn shadow_matches_local_train_on_same_fixture() {
        let (cfg, global, hyper) = world(7);
        let client = crate::data::ClientDataset {
            user: 0,
            positives: vec![2, 6],
            test_item: 30,
            val_item: 31,
            negatives: vec![1, 3, 9, 12, 13, 20, 21, 22],
        };
        let touched = client.touched_items();
        let labels: Vec<u8> = touched.iter().map(|&i| u8::from(client.is_positive(i))).collect();
        let rng = RngStream::new(4, "shadow");
        let shadow = train_shadow(&cfg, 0, &touched, &labels, &global, &hyper, hyper.local_epochs, &rng).unwrap();
        let private = PrivateParams::init(&cfg, &mut rng.derive("private"));
        let direct = local_train(&cfg, &client, &global, &private, &hyper, None, &mut rng.derive("shuffle")).unwrap();
        assert_eq!(shadow, direct.upload.rows);
    }

    #[test]
    fn beats_random_on_a_synthetic_client() {
        let mut wins = 0;
        for rep in 0..50u64 {
            let (cfg, global, hyper) = world(100 + rep);
            let touched: Vec<usize> = (0..40).collect();
            let mut shuffle = RngStream::new(rep, "truth");
            let pos: Vec<usize> = {
                let mut p = shuffle.choose(&touched, 8);
                p.sort_unstable();
                p
            };
            let labels: Vec<u8> = touched.iter().map(|i| u8::from(pos.contains(i))).collect();
            let up = upload_for(&cfg, &global, &hyper, &touched, &labels, rep);
            let r = imia_attack(&up, &global, &cfg, &AttackConfig::default(), &hyper, None, &RngStream::new(rep, "imia")).unwrap();
            let imia = attack_f1(&r.predicted_positive, &pos).unwrap().f1;
            let guess = random_attack(&touched, 0.2, &mut RngStream::new(rep, "random")).unwrap();
            let random = attack_f1(&guess, &pos).unwrap().f1;
            wins += u32::from(imia > random);
        }
        assert!(wins >= 45, "imia beat random in {wins}/50");
    }
}

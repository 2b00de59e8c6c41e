use serde::{Deserialize, Serialize};

use crate::data::{ClientDataset, DatasetSplit};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::models::{rank_by_score, score_items, ModelConfig, PrivateParams, PublicParams};
use crate::numerics::RngStream;

/// Candidate set a held-out item is ranked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "protocol")]
pub enum HitProtocol {
    /// The held-out item plus `negatives` sampled non-interacted items.
    Sampled { negatives: usize },
    /// The held-out item plus every non-interacted item.
    AllItems,
}

impl Default for HitProtocol {
    fn default() -> Self {
        HitProtocol::Sampled { negatives: 99 }
    }
}

impl HitProtocol {
    pub fn label(&self) -> String {
        match self {
            HitProtocol::Sampled { negatives } => format!("sampled-{negatives}"),
            HitProtocol::AllItems => "all-items".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeldOut {
    Test,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserHit {
    pub user: usize,
    pub hit: u8,
    /// Candidate list size including the held-out item.
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecMetrics {
    pub k: usize,
    pub protocol: String,
    pub per_user: Vec<UserHit>,
    pub mean: f64,
    /// Users for whom fewer negatives than requested were available.
    pub short_users: Vec<usize>,
}

/// Everything hit_at_k needs besides the model itself.
#[derive(Debug, Clone, Copy)]
pub struct HitEval {
    pub k: usize,
    pub protocol: HitProtocol,
    pub held_out: HeldOut,
    pub seed: u64,
}

impl HitEval {
    pub fn test(seed: u64) -> Self {
        HitEval {
            k: 10,
            protocol: HitProtocol::default(),
            held_out: HeldOut::Test,
            seed,
        }
    }

    pub fn validation(seed: u64) -> Self {
        HitEval {
            held_out: HeldOut::Validation,
            ..HitEval::test(seed)
        }
    }
}

/// The held-out item and its negatives for one user. The draw depends only
/// on (seed, user, held-out kind), so every model is ranked on the same list.
pub fn hit_candidates(client: &ClientDataset, item_count: usize, eval: &HitEval) -> (usize, Vec<usize>, bool) {
    let target = match eval.held_out {
        HeldOut::Test => client.test_item,
        HeldOut::Validation => client.val_item,
    };
    let pool: Vec<usize> = (0..item_count).filter(|&i| !client.interacted(i)).collect();
    let (mut negatives, short) = match eval.protocol {
        HitProtocol::AllItems => (pool, false),
        HitProtocol::Sampled { negatives } => {
            let tag = match eval.held_out {
                HeldOut::Test => "eval",
                HeldOut::Validation => "val-eval",
            };
            let mut rng = RngStream::new(eval.seed, format!("{tag}:{}", client.user));
            let take = negatives.min(pool.len());
            (rng.choose(&pool, take), take < negatives)
        }
    };
    negatives.sort_unstable();
    (target, negatives, short)
}

/// 1 if `target` ranks in the top `k` of `candidates` by score (ties broken
/// by ascending item id).
pub fn hit_from_scores(target: usize, candidates: &[usize], scores: &[f64], k: usize) -> Result<u8> {
    let top = rank_by_score(candidates, scores, k)?;
    Ok(u8::from(top.items.contains(&target)))
}

/// Hit@K over every client of the split. `private` is aligned with
/// `split.clients`.
pub fn hit_at_k(
    cfg: &ModelConfig,
    public: &PublicParams,
    private: &[PrivateParams],
    split: &DatasetSplit,
    eval: &HitEval,
    exec: Execution,
) -> Result<RecMetrics> {
    if private.len() != split.clients.len() {
        return Err(Error::shape("hit_at_k private params", split.clients.len(), private.len()));
    }
    if eval.k == 0 {
        return Err(Error::Argument("k must be positive".into()));
    }
    let pairs: Vec<(&ClientDataset, &PrivateParams)> = split.clients.iter().zip(private).collect();
    let rows = exec.map(&pairs, |(client, p)| -> Result<(UserHit, bool)> {
        let (target, mut candidates, short) = hit_candidates(client, split.item_count(), eval);
        candidates.push(target);
        let scores = score_items(cfg, public, p, &client.positives, &candidates)?;
        Ok((
            UserHit {
                user: client.user,
                hit: hit_from_scores(target, &candidates, &scores, eval.k)?,
                candidates: candidates.len(),
            },
            short,
        ))
    });
    let mut per_user = Vec::with_capacity(rows.len());
    let mut short_users = Vec::new();
    for r in rows {
        let (h, short) = r?;
        if short {
            short_users.push(h.user);
        }
        per_user.push(h);
    }
    let mean = if per_user.is_empty() {
        0.0
    } else {
        per_user.iter().map(|h| f64::from(h.hit)).sum::<f64>() / per_user.len() as f64
    };
    Ok(RecMetrics {
        k: eval.k,
        protocol: eval.protocol.label(),
        per_user,
        mean,
        short_users,
    })
}

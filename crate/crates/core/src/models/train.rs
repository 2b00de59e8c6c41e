use serde::{Deserialize, Serialize};

use super::ffn::{concat_inputs, head_backward, head_forward, head_scores};
use super::lightgcn::{propagate, LocalGraph};
use super::loss::{add_penalty_grad, rec_loss, Defense, PenaltyNorm, PenaltyScope, RecLoss};
use super::params::{ModelConfig, ModelKind, PrivateParams, PublicParams};
use crate::data::ClientDataset;
use crate::error::{Error, Result};
use crate::federation::TrainHyper;
use crate::numerics::{adam_step, sigmoid, AdamState, Matrix, RngStream};

/// Index of the user embedding in a local parameter list.
pub const USER: usize = 0;
/// Index of the local item rows in a local parameter list.
pub const ITEMS: usize = 1;
/// First dense block in a local parameter list.
pub const DENSE: usize = 2;

/// Parameters a client sends back after local training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Upload {
    /// Touched item ids, ascending; row `k` of `rows` belongs to `item_ids[k]`.
    pub item_ids: Vec<usize>,
    pub rows: Matrix,
    pub dense: Vec<Matrix>,
}

#[derive(Debug, Clone)]
pub struct LocalOutcome {
    pub private: PrivateParams,
    pub upload: Upload,
    /// Mean per-sample recommendation loss over the last local epoch.
    pub mean_loss: f64,
    pub clamped: usize,
    pub steps: u64,
}

/// The objective a client minimizes over `[user, items, dense...]`.
pub struct LocalObjective<'a> {
    pub cfg: &'a ModelConfig,
    /// Propagation graph for LightGCN; ignored for NCF.
    pub graph: Option<LocalGraph>,
    /// Global item rows and dense blocks for the proximal term.
    pub anchor: Option<(&'a Matrix, &'a [Matrix], Defense)>,
}

impl LocalObjective<'_> {
    /// Batch loss (recommendation plus any proximal term) and its gradient.
    pub fn loss_and_grad(&self, params: &[Matrix], rows: &[usize], labels: &[u8]) -> Result<(f64, RecLoss, Vec<Matrix>)> {
        let d = self.cfg.embedding_dim;
        let user = params[USER].as_slice();
        let items = &params[ITEMS];
        let dense = &params[DENSE..];

        let propagated;
        let (fu, fitems): (&[f64], &Matrix) = match (self.cfg.kind, &self.graph) {
            (ModelKind::LightGcn, Some(g)) => {
                propagated = propagate(user, items, g, self.cfg.propagation_layers);
                (&propagated.0, &propagated.1)
            }
            (ModelKind::LightGcn, None) => {
                return Err(Error::Argument("LightGCN objective needs a local graph".into()))
            }
            (ModelKind::Ncf, _) => (user, items),
        };

        let cache = head_forward(dense, concat_inputs(fu, fitems, rows))?;
        let probs: Vec<f64> = cache.logits.iter().map(|&z| sigmoid(z)).collect();
        let rec = rec_loss(&probs, labels)?;
        let dlogits: Vec<f64> = probs.iter().zip(labels).map(|(p, &r)| p - f64::from(r)).collect();

        let mut grads: Vec<Matrix> = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        let dx = {
            let (_, dense_grads) = grads.split_at_mut(DENSE);
            head_backward(dense, &cache, &dlogits, dense_grads)?
        };
        let mut gu = vec![0.0; d];
        let mut gitems = Matrix::zeros(items.rows(), d);
        for (b, &r) in rows.iter().enumerate() {
            let src = dx.row(b);
            for (g, x) in gu.iter_mut().zip(&src[..d]) {
                *g += x;
            }
            for (g, x) in gitems.row_mut(r).iter_mut().zip(&src[d..]) {
                *g += x;
            }
        }
        if let (ModelKind::LightGcn, Some(g)) = (self.cfg.kind, &self.graph) {
            let (bu, bitems) = propagate(&gu, &gitems, g, self.cfg.propagation_layers);
            gu = bu;
            gitems = bitems;
        }
        grads[USER] = Matrix::row_vector(gu);
        grads[ITEMS] = gitems;

        let mut total = rec.value;
        if let Some((anchor_items, anchor_dense, defense)) = self.anchor {
            if defense.mu > 0.0 {
                let all = defense.scope == PenaltyScope::AllPublic;
                let mut sq = items.sq_dist(anchor_items)?;
                if all {
                    for (k, anchor) in anchor_dense.iter().enumerate() {
                        sq += params[DENSE + k].sq_dist(anchor)?;
                    }
                }
                let (penalty, scale) = match defense.norm {
                    PenaltyNorm::Squared => (sq, 2.0 * defense.mu),
                    PenaltyNorm::Plain if sq > 0.0 => (sq.sqrt(), defense.mu / sq.sqrt()),
                    PenaltyNorm::Plain => (0.0, 0.0),
                };
                total += defense.mu * penalty;
                add_penalty_grad(&mut grads[ITEMS], items, anchor_items, scale);
                if all {
                    for (k, anchor) in anchor_dense.iter().enumerate() {
                        add_penalty_grad(&mut grads[DENSE + k], &params[DENSE + k], anchor, scale);
                    }
                }
            }
        }
        Ok((total, rec, grads))
    }

    pub fn loss(&self, params: &[Matrix], rows: &[usize], labels: &[u8]) -> Result<f64> {
        Ok(self.loss_and_grad(params, rows, labels)?.0)
    }
}

/// Local parameter list `[user, rows of item_ids, dense...]`.
pub fn local_params(global: &PublicParams, private: &PrivateParams, item_ids: &[usize]) -> Vec<Matrix> {
    let mut params = Vec::with_capacity(DENSE + global.dense.len());
    params.push(Matrix::row_vector(private.user.clone()));
    params.push(global.items.select_rows(item_ids));
    params.extend(global.dense.iter().cloned());
    params
}

/// Trains a local model on explicitly labeled items.
///
/// `item_ids` must be ascending and distinct; `labels[k]` belongs to
/// `item_ids[k]`. Positives form the LightGCN graph edges. The returned
/// upload carries exactly the rows of `item_ids`.
#[allow(clippy::too_many_arguments)]
pub fn train_on_labels(
    cfg: &ModelConfig,
    user_id: usize,
    item_ids: &[usize],
    labels: &[u8],
    global: &PublicParams,
    private: &PrivateParams,
    hyper: &TrainHyper,
    defense: Option<Defense>,
    rng: &mut RngStream,
) -> Result<LocalOutcome> {
    if item_ids.len() != labels.len() {
        return Err(Error::shape("train_on_labels labels", item_ids.len(), labels.len()));
    }
    if private.user.len() != cfg.embedding_dim {
        return Err(Error::shape("private embedding", cfg.embedding_dim, private.user.len()));
    }
    if let Some(&bad) = item_ids.iter().find(|&&i| i >= global.item_count()) {
        return Err(Error::shape("train_on_labels item id", format!("< {}", global.item_count()), bad));
    }
    if let Some(d) = defense {
        if !(d.mu >= 0.0) {
            return Err(Error::Argument(format!("μ must be >= 0, got {}", d.mu)));
        }
    }

    let mut params = local_params(global, private, item_ids);
    let anchor_items = params[ITEMS].clone();
    let anchor_dense: Vec<Matrix> = global.dense.clone();
    let graph = match cfg.kind {
        ModelKind::LightGcn => {
            let edges: Vec<usize> = (0..item_ids.len()).filter(|&k| labels[k] == 1).collect();
            Some(LocalGraph::star(item_ids.len(), &edges)?)
        }
        ModelKind::Ncf => None,
    };
    let objective = LocalObjective {
        cfg,
        graph,
        anchor: defense.map(|d| (&anchor_items, anchor_dense.as_slice(), d)),
    };

    let n = item_ids.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut adam = AdamState::for_params(&params);
    let mut clamped = 0;
    let mut last_finite = f64::NAN;
    let mut epoch_loss = 0.0;
    let batch = hyper.batch_size.max(1);
    let mut batch_labels = Vec::with_capacity(batch);

    for _ in 0..hyper.local_epochs {
        rng.shuffle(&mut order);
        epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            batch_labels.clear();
            batch_labels.extend(chunk.iter().map(|&k| labels[k]));
            let (total, rec, grads) = objective.loss_and_grad(&params, chunk, &batch_labels)?;
            if !total.is_finite() {
                return Err(Error::Divergence {
                    user: user_id,
                    last_finite_loss: last_finite,
                });
            }
            last_finite = total;
            clamped += rec.clamped;
            epoch_loss += rec.value;
            adam_step(&mut adam, &mut params, &grads, hyper.lr).map_err(|e| match e {
                Error::NonFinite { .. } => Error::Divergence {
                    user: user_id,
                    last_finite_loss: last_finite,
                },
                other => other,
            })?;
        }
    }
    if hyper.local_epochs == 0 && n > 0 {
        let all: Vec<usize> = (0..n).collect();
        epoch_loss = objective.loss_and_grad(&params, &all, labels)?.1.value;
    }

    let steps = adam.step_count();
    let mut it = params.into_iter();
    let user = it.next().expect("user block").into_vec();
    let rows = it.next().expect("item block");
    let dense: Vec<Matrix> = it.collect();
    Ok(LocalOutcome {
        private: PrivateParams { user },
        upload: Upload {
            item_ids: item_ids.to_vec(),
            rows,
            dense,
        },
        mean_loss: if n == 0 { 0.0 } else { epoch_loss / n as f64 },
        clamped,
        steps,
    })
}

/// One client's local update for a round: positives labeled 1, the current
/// negatives labeled 0.
pub fn local_train(
    cfg: &ModelConfig,
    client: &ClientDataset,
    global: &PublicParams,
    private: &PrivateParams,
    hyper: &TrainHyper,
    defense: Option<Defense>,
    rng: &mut RngStream,
) -> Result<LocalOutcome> {
    let item_ids = client.touched_items();
    let labels: Vec<u8> = item_ids.iter().map(|&i| u8::from(client.is_positive(i))).collect();
    train_on_labels(cfg, client.user, &item_ids, &labels, global, private, hyper, defense, rng)
}

/// Predicted preference of a user for each of `items`.
///
/// `graph_positives` are the user's interacted items, which LightGCN uses as
/// propagation edges; NCF ignores them.
pub fn score_items(
    cfg: &ModelConfig,
    public: &PublicParams,
    private: &PrivateParams,
    graph_positives: &[usize],
    items: &[usize],
) -> Result<Vec<f64>> {
    if let Some(&bad) = items.iter().chain(graph_positives).find(|&&i| i >= public.item_count()) {
        return Err(Error::shape("score_items item id", format!("< {}", public.item_count()), bad));
    }
    if private.user.len() != public.dim() {
        return Err(Error::shape("private embedding", public.dim(), private.user.len()));
    }
    const CHUNK: usize = 512;
    match cfg.kind {
        ModelKind::Ncf => {
            let mut out = Vec::with_capacity(items.len());
            for chunk in items.chunks(CHUNK) {
                out.extend(head_scores(&public.dense, concat_inputs(&private.user, &public.items, chunk))?);
            }
            Ok(out)
        }
        ModelKind::LightGcn => {
            let mut local: Vec<usize> = graph_positives.iter().chain(items).copied().collect();
            local.sort_unstable();
            local.dedup();
            let edges: Vec<usize> = graph_positives
                .iter()
                .map(|i| local.binary_search(i).expect("positive in local set"))
                .collect();
            let graph = LocalGraph::star(local.len(), &edges)?;
            let rows = public.items.select_rows(&local);
            let (fu, fitems) = propagate(&private.user, &rows, &graph, cfg.propagation_layers);
            let positions: Vec<usize> = items
                .iter()
                .map(|i| local.binary_search(i).expect("candidate in local set"))
                .collect();
            let mut out = Vec::with_capacity(items.len());
            for chunk in positions.chunks(CHUNK) {
                out.extend(head_scores(&public.dense, concat_inputs(&fu, &fitems, chunk))?);
            }
            Ok(out)
        }
    }
}

/// Single NCF preference score.
pub fn ncf_score(public: &PublicParams, private: &PrivateParams, item: usize) -> Result<f64> {
    if item >= public.item_count() {
        return Err(Error::shape("ncf_score item id", format!("< {}", public.item_count()), item));
    }
    if private.user.len() != public.dim() {
        return Err(Error::shape("private embedding", public.dim(), private.user.len()));
    }
    Ok(head_scores(&public.dense, concat_inputs(&private.user, &public.items, &[item]))?[0])
}

/// Ranked candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct TopK {
    pub items: Vec<usize>,
    /// Set when more items were requested than there were candidates.
    pub short: bool,
}

/// Sorts candidates by score descending (ties by ascending id) and keeps `k`.
pub fn rank_by_score(candidates: &[usize], scores: &[f64], k: usize) -> Result<TopK> {
    if candidates.len() != scores.len() {
        return Err(Error::shape("rank_by_score", candidates.len(), scores.len()));
    }
    if candidates.is_empty() {
        return Err(Error::Argument("no candidates to rank".into()));
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(candidates[a].cmp(&candidates[b])));
    let short = k > candidates.len();
    order.truncate(k);
    Ok(TopK {
        items: order.into_iter().map(|i| candidates[i]).collect(),
        short,
    })
}

pub fn score_topk(
    cfg: &ModelConfig,
    public: &PublicParams,
    private: &PrivateParams,
    graph_positives: &[usize],
    candidates: &[usize],
    k: usize,
) -> Result<TopK> {
    let scores = score_items(cfg, public, private, graph_positives, candidates)?;
    rank_by_score(candidates, &scores, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_check, EPSILON};

    fn hyper(epochs: usize, batch: usize, lr: f64) -> TrainHyper {
        TrainHyper {
            lr,
            local_epochs: epochs,
            batch_size: batch,
            ..TrainHyper::default()
        }
    }

    /// Parameters with entries large enough that the loss is far from flat.
    fn toy(kind: ModelKind, seed: u64) -> (ModelConfig, PublicParams, PrivateParams) {
        let cfg = ModelConfig {
            kind,
            embedding_dim: 3,
            ffn_dims: vec![6, 5, 4],
            propagation_layers: 2,
        };
        let mut rng = RngStream::new(seed, "toy");
        let mut public = PublicParams::init(&cfg, 9, &mut rng).unwrap();
        public.items.scale(50.0);
        for m in &mut public.dense {
            m.scale(50.0);
            for x in m.as_mut_slice() {
                if *x == 0.0 {
                    *x = 0.1 * rng.normal();
                }
            }
        }
        let mut private = PrivateParams::init(&cfg, &mut rng);
        private.user.iter_mut().for_each(|x| *x *= 50.0);
        (cfg, public, private)
    }

    fn check_gradients(kind: ModelKind, defense: Option<(PenaltyNorm, PenaltyScope)>) -> f64 {
        let (cfg, public, private) = toy(kind, 11);
        let ids = [0, 2, 3, 5, 8];
        let labels = [1, 0, 1, 0, 0];
        let params = local_params(&public, &private, &ids);
        let mut moved = params.clone();
        for m in &mut moved[ITEMS..] {
            let mut rng = RngStream::new(3, "shift");
            for x in m.as_mut_slice() {
                *x += 0.2 * rng.normal();
            }
        }
        let anchor_items = params[ITEMS].clone();
        let edges: Vec<usize> = (0..ids.len()).filter(|&k| labels[k] == 1).collect();
        let objective = LocalObjective {
            cfg: &cfg,
            graph: (kind == ModelKind::LightGcn).then(|| LocalGraph::star(ids.len(), &edges).unwrap()),
            anchor: defense.map(|(norm, scope)| (&anchor_items, &public.dense[..], Defense { mu: 0.7, scope, norm })),
        };
        let rows: Vec<usize> = vec![4, 0, 2, 1, 3];
        let batch_labels: Vec<u8> = rows.iter().map(|&r| labels[r]).collect();
        let (_, _, grads) = objective.loss_and_grad(&moved, &rows, &batch_labels).unwrap();
        finite_diff_check(|p| objective.loss(p, &rows, &batch_labels), &moved, &grads, 1e-5).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        for kind in [ModelKind::Ncf, ModelKind::LightGcn] {
            let defended = [PenaltyNorm::Squared, PenaltyNorm::Plain]
                .into_iter()
                .flat_map(|n| [PenaltyScope::ItemsOnly, PenaltyScope::AllPublic].map(|s| Some((n, s))));
            for defense in std::iter::once(None).chain(defended) {
                let err = check_gradients(kind, defense);
                assert!(err < 1e-4, "{kind:?} {defense:?}: {err}");
            }
        }
    }

    fn client() -> ClientDataset {
        ClientDataset {
            user: 0,
            positives: vec![1, 4],
            test_item: 7,
            val_item: 8,
            negatives: vec![0, 2, 3, 5, 6],
        }
    }

    #[test]
    fn zero_epochs_changes_nothing() {
        for kind in [ModelKind::Ncf, ModelKind::LightGcn] {
            let (cfg, public, private) = toy(kind, 2);
            let out = local_train(&cfg, &client(), &public, &private, &hyper(0, 4, 0.01), None, &mut RngStream::new(1, "s")).unwrap();
            assert_eq!(out.private, private);
            assert_eq!(out.upload.rows, public.items.select_rows(&client().touched_items()));
            assert_eq!(out.upload.dense, public.dense);
            assert_eq!(out.steps, 0);
            assert!(out.mean_loss > 0.0);
        }
    }

    #[test]
    fn one_full_batch_epoch_is_one_adam_step() {
        let (cfg, public, private) = toy(ModelKind::Ncf, 4);
        let c = client();
        let ids = c.touched_items();
        let labels: Vec<u8> = ids.iter().map(|&i| u8::from(c.is_positive(i))).collect();
        let lr = 0.01;
        let out = local_train(&cfg, &c, &public, &private, &hyper(1, 64, lr), None, &mut RngStream::new(1, "s")).unwrap();
        assert_eq!(out.steps, 1);

        let params = local_params(&public, &private, &ids);
        let objective = LocalObjective {
            cfg: &cfg,
            graph: None,
            anchor: None,
        };
        let all: Vec<usize> = (0..ids.len()).collect();
        let (_, _, grads) = objective.loss_and_grad(&params, &all, &labels).unwrap();
        // At t = 1 bias correction gives m̂ = g and v̂ = g².
        let expect = |p: f64, g: f64| p - lr * g / (g.abs() + EPSILON);
        for (x, (p, g)) in out.private.user.iter().zip(params[USER].as_slice().iter().zip(grads[USER].as_slice())) {
            assert!((x - expect(*p, *g)).abs() < 1e-12);
        }
        for (x, (p, g)) in out.upload.rows.as_slice().iter().zip(params[ITEMS].as_slice().iter().zip(grads[ITEMS].as_slice())) {
            assert!((x - expect(*p, *g)).abs() < 1e-12);
        }
    }

    #[test]
    fn strong_penalty_pins_public_rows() {
        let (cfg, public, private) = toy(ModelKind::Ncf, 5);
        let c = client();
        let global = public.items.select_rows(&c.touched_items());
        let drift = |mu: f64| {
            let out = local_train(&cfg, &c, &public, &private, &hyper(20, 4, 0.001), Some(Defense::new(mu)), &mut RngStream::new(1, "s")).unwrap();
            let rows = &out.upload.rows;
            let max = rows.as_slice().iter().zip(global.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            (rows.sq_dist(&global).unwrap(), max)
        };
        let (_, max) = drift(1e3);
        assert!(max < 1e-2, "max deviation {max}");
        let d: Vec<f64> = [0.0, 1.0, 10.0, 100.0].iter().map(|&mu| drift(mu).0).collect();
        assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
    }

    #[test]
    fn upload_is_exactly_the_touched_rows() {
        for kind in [ModelKind::Ncf, ModelKind::LightGcn] {
            let (cfg, public, private) = toy(kind, 6);
            let out = local_train(&cfg, &client(), &public, &private, &hyper(2, 3, 0.01), None, &mut RngStream::new(1, "s")).unwrap();
            assert_eq!(out.upload.item_ids, vec![0, 1, 2, 3, 4, 5, 6]);
            assert_eq!(out.upload.rows.rows(), 7);
        }
    }

    #[test]
    fn ranking_cases() {
        let top = rank_by_score(&[0, 1, 2], &[0.9, 0.1, 0.5], 3).unwrap();
        assert_eq!(top.items, vec![0, 2, 1]);
        let tie = rank_by_score(&[5, 3, 4], &[0.5, 0.5, 0.7], 2).unwrap();
        assert_eq!(tie.items, vec![4, 3]);
        let short = rank_by_score(&[1], &[0.2], 10).unwrap();
        assert!(short.short);
        assert!(rank_by_score(&[], &[], 1).is_err());

        let mut rng = RngStream::new(8, "rank");
        for _ in 0..50 {
            let n = 1 + rng.below(30);
            let cands: Vec<usize> = (0..n).map(|i| i * 3).collect();
            let scores: Vec<f64> = (0..n).map(|_| (rng.below(5) as f64) / 4.0).collect();
            let k = rng.below(n + 2);
            let got = rank_by_score(&cands, &scores, k).unwrap().items;
            // Brute force: repeatedly take the best remaining.
            let mut left: Vec<(usize, f64)> = cands.iter().copied().zip(scores.iter().copied()).collect();
            let mut want = Vec::new();
            while want.len() < k.min(n) {
                let best = (0..left.len())
                    .max_by(|&a, &b| left[a].1.partial_cmp(&left[b].1).unwrap().then(left[b].0.cmp(&left[a].0)))
                    .unwrap();
                want.push(left.remove(best).0);
            }
            assert_eq!(got, want);
        }
    }

    #[test]
    fn ncf_score_cases() {
        let (_, mut public, private) = toy(ModelKind::Ncf, 7);
        for x in public.dense.last_mut().unwrap().as_mut_slice() {
            *x = 0.0;
        }
        assert_eq!(ncf_score(&public, &private, 3).unwrap(), 0.5);

        let toy = PublicParams {
            items: Matrix::from_rows(&[vec![2.0]]).unwrap(),
            dense: vec![
                Matrix::from_rows(&[vec![0.5, 0.25]]).unwrap(),
                Matrix::row_vector(vec![0.1]),
                Matrix::row_vector(vec![2.0]),
            ],
        };
        let user = PrivateParams { user: vec![1.0] };
        let expected = 1.0 / (1.0 + (-2.0f64 * 1.1).exp());
        assert!((ncf_score(&toy, &user, 0).unwrap() - expected).abs() < 1e-15);

        let (cfg, public, private) = toy_public();
        let scores = score_items(&cfg, &public, &private, &[], &(0..9).collect::<Vec<_>>()).unwrap();
        assert!(scores.iter().all(|&s| s > 0.0 && s < 1.0));
    }

    fn toy_public() -> (ModelConfig, PublicParams, PrivateParams) {
        toy(ModelKind::Ncf, 9)
    }
}

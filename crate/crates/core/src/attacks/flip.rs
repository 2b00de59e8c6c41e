use serde::{Deserialize, Serialize};

use crate::data::{sample_negatives, ClientDataset};
use crate::error::{Error, Result};
use crate::federation::TrainHyper;
use crate::models::{train_on_labels, ModelConfig, PrivateParams, PublicParams};
use crate::numerics::{euclidean_dist, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipTrial {
    pub user: usize,
    pub item: usize,
    /// Label of `item` in the flipped dataset.
    pub flipped_rating: u8,
    /// Distance from the real model's row to the row trained on the real data.
    pub d_same: f64,
    /// Distance from the real model's row to the row trained on flipped data.
    pub d_flipped: f64,
    pub inferred: u8,
    pub correct: bool,
    /// Set when the two distances were equal.
    pub tie: bool,
}

/// Flip one rating and ask which of two retrained models the real one
/// resembles.
///
/// Three models start from the same public parameters and see the same
/// minibatch order: M on the client's data, M' on the same data, M'' on the
/// data with one rating flipped. M' and M'' use private embeddings different
/// from M's. If M's row for the item is closer to M' than to M'', the item's
/// rating is inferred to be the unflipped one.
pub fn flip_inference_trial(
    client: &ClientDataset,
    item_count: usize,
    model: &ModelConfig,
    hyper: &TrainHyper,
    rng: &RngStream,
) -> Result<FlipTrial> {
    flip_trial(client, item_count, model, hyper, rng, false)
}

pub(crate) fn flip_trial(
    client: &ClientDataset,
    item_count: usize,
    model: &ModelConfig,
    hyper: &TrainHyper,
    rng: &RngStream,
    replay_private: bool,
) -> Result<FlipTrial> {
    if client.positives.is_empty() {
        return Err(Error::Argument(format!("user {} has no training items", client.user)));
    }
    let public = PublicParams::init(model, item_count, &mut rng.derive("public"))?;
    let mut data = client.clone();
    data.negatives = sample_negatives(client, item_count, hyper.neg_ratio, hyper.shortfall, &mut rng.derive("negatives"))?;
    let touched = data.touched_items();
    let labels: Vec<u8> = touched.iter().map(|&i| u8::from(data.is_positive(i))).collect();
    let k = rng.derive("item").below(touched.len());
    let mut flipped = labels.clone();
    flipped[k] = 1 - labels[k];

    let train = |labels: &[u8], private_label: &str| -> Result<Vec<f64>> {
        let private = PrivateParams::init(model, &mut rng.derive(private_label));
        let out = train_on_labels(
            model,
            client.user,
            &touched,
            labels,
            &public,
            &private,
            hyper,
            None,
            &mut rng.derive("shuffle"),
        )?;
        Ok(out.upload.rows.row(k).to_vec())
    };
    let real = train(&labels, "private:0")?;
    let same = train(&labels, if replay_private { "private:0" } else { "private:1" })?;
    let other = train(&flipped, "private:2")?;
    let d_same = euclidean_dist(&real, &same)?;
    let d_flipped = euclidean_dist(&real, &other)?;
    let tie = d_same == d_flipped;
    let inferred = if d_same <= d_flipped { 1 - flipped[k] } else { flipped[k] };
    Ok(FlipTrial {
        user: client.user,
        item: touched[k],
        flipped_rating: flipped[k],
        d_same,
        d_flipped,
        inferred,
        correct: inferred == labels[k],
        tie,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;

    fn client() -> ClientDataset {
        ClientDataset {
            user: 3,
            positives: vec![0, 4, 7, 11],
            test_item: 20,
            val_item: 21,
            negatives: vec![],
        }
    }

    #[test]
    fn replayed_private_init_is_exact() {
        let cfg = ModelConfig::tiny(ModelKind::Ncf, 4, 4);
        let hyper = TrainHyper {
            local_epochs: 3,
            batch_size: 8,
            ..TrainHyper::default()
        };
        for s in 0..5 {
            let t = flip_trial(&client(), 40, &cfg, &hyper, &RngStream::new(s, "flip"), true).unwrap();
            assert_eq!(t.d_same, 0.0);
            assert!(t.correct);
            assert!(t.inferred <= 1);
        }
    }

    #[test]
    fn no_training_items_is_an_error() {
        let cfg = ModelConfig::tiny(ModelKind::Ncf, 4, 4);
        let empty = ClientDataset {
            positives: vec![],
            ..client()
        };
        assert!(flip_inference_trial(&empty, 40, &cfg, &TrainHyper::default(), &RngStream::new(1, "f")).is_err());
    }
}

//! Fed-NCF and Fed-LightGCN local models.

mod checkpoint;
mod ffn;
mod lightgcn;
mod loss;
mod params;
mod train;

pub use checkpoint::{Checkpoint, CheckpointHeader, CHECKPOINT_MAGIC};
pub use lightgcn::{lightgcn_embed, LocalGraph};
pub use loss::{defended_loss, public_sq_dist, rec_loss, Defense, PenaltyNorm, PenaltyScope, RecLoss};
pub use params::{ModelConfig, ModelKind, PrivateParams, PublicParams, INIT_STD};
pub use train::{
    local_params, local_train, ncf_score, rank_by_score, score_items, score_topk, train_on_labels, LocalObjective,
    LocalOutcome, TopK, Upload, DENSE, ITEMS, USER,
};

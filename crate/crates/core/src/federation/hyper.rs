use serde::{Deserialize, Serialize};

use crate::data::{NegativeRatio, Shortfall};
use crate::error::{Error, Result};

/// Participant cap used when `participants` is unset.
pub const DEFAULT_PARTICIPANT_CAP: usize = 256;

/// How uploaded rows are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// FedAvg: per-row mean over the clients that touched the row.
    #[default]
    Mean,
    /// Plain sum over uploads, kept for comparison only; it diverges.
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHyper {
    pub lr: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub neg_ratio: NegativeRatio,
    pub global_rounds: usize,
    /// Participants per round; `None` means `min(|U|, 256)`. Written as `0`
    /// when unset.
    #[serde(with = "zero_is_none")]
    pub participants: Option<usize>,
    /// Rounds without validation Hit@10 improvement before stopping;
    /// `None` (written `0`) disables early stopping.
    #[serde(with = "zero_is_none")]
    pub patience: Option<usize>,
    pub shortfall: Shortfall,
    pub aggregation: Aggregation,
}

/// Counts where zero is never valid, so it stands for "unset" on disk. Keeps
/// `None` distinguishable from a missing field that takes the default.
mod zero_is_none {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(v.unwrap_or(0) as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
        let n = usize::deserialize(d)?;
        Ok((n > 0).then_some(n))
    }
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            lr: 0.001,
            local_epochs: 20,
            batch_size: 64,
            neg_ratio: NegativeRatio::DEFAULT,
            global_rounds: 200,
            participants: None,
            patience: Some(20),
            shortfall: Shortfall::Error,
            aggregation: Aggregation::Mean,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Argument(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("batch_size must be positive".into()));
        }
        if self.participants == Some(0) {
            return Err(Error::Argument("participants must be positive".into()));
        }
        if self.patience == Some(0) {
            return Err(Error::Argument("patience must be positive".into()));
        }
        let p = self.neg_ratio.positive_fraction();
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Argument(format!("negative ratio gives positive fraction {p}")));
        }
        Ok(())
    }

    pub fn participants_for(&self, users: usize) -> usize {
        self.participants.unwrap_or(DEFAULT_PARTICIPANT_CAP.min(users))
    }
}

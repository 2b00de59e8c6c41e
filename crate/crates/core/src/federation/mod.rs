//! The federated protocol: participant sampling, local updates, LDP,
//! aggregation and the per-round trace archive.

mod hyper;
mod protocol;
mod trace;
mod training;

pub use hyper::{Aggregation, TrainHyper, DEFAULT_PARTICIPANT_CAP};
pub use protocol::{aggregate, apply_ldp, sample_participants, LdpConfig, UploadRecord};
pub use trace::{ArchivePolicy, RoundTrace, TRACE_MAGIC};
pub use training::{CurvePoint, Federation, GlobalState, RoundOutput, Seeds, TrainingRun};
pub(crate) use training::csv_error;

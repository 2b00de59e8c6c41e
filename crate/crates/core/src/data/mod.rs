//! Interaction ingestion, leave-one-out splitting and negative sampling.

mod buckets;
mod ingest;
mod negatives;
mod split;

pub use buckets::{interaction_buckets, BucketMap};
pub use ingest::{load_dataset, parse_dataset, Catalog, ColumnMapping, Dataset, Interaction};
pub use negatives::{resample_negatives, sample_negatives, NegativeRatio, Shortfall};
pub use split::{leave_one_out_split, ClientDataset, DatasetSplit, ExcludedUser, SplitStats, MIN_INTERACTIONS};

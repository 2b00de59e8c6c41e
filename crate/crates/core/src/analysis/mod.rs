//! Attack and recommendation metrics, deviation tracking and report output.

mod buckets;
mod cost;
mod deviation;
mod hit;
mod metrics;
mod report;

pub use buckets::{bucketed_f1, spearman, BucketRow, BucketedF1};
pub use cost::{cost_effectiveness, CostEffectiveness};
pub use deviation::{deviation_point, deviation_report, mean_row_sq_dist, DeviationPoint, DeviationReport};
pub use hit::{hit_at_k, hit_candidates, hit_from_scores, HeldOut, HitEval, HitProtocol, RecMetrics, UserHit};
pub use metrics::{attack_f1, macro_average, AttackMetrics, MacroMetrics};
pub use report::{read_jsonl, score_predictions, write_columns, write_csv, write_jsonl, AttackRecord, AttackScore};

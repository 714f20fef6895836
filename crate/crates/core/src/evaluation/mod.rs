//! Leave-one-out ranking, HR@K / NDCG@K per popularity slice, embedding
//! export and multi-regime comparison tables.

mod export;
mod metrics;
mod ranking;
mod report;

pub use export::{export_embeddings, export_params, read_embeddings, ExportSource, ItemFilter};
pub use metrics::{evaluate_scorer, hit, hr_ndcg, ndcg_gain, rank_test_users, MetricFile, SliceMetrics};
pub use ranking::{candidates_for_user, rank_for_user, rank_of, CandidatePolicy, RankingResult};
pub use report::{compare_report, ComparisonReport, ReportRow};

use crate::data::ProcessedDataset;
use crate::error::Result;
use crate::training::TrainedModel;

/// Evaluates a trained model; `lambda_p` only matters for two-component
/// models.
pub fn evaluate_model(
    model: &TrainedModel,
    dataset: &ProcessedDataset,
    regime: &str,
    lambda_p: f64,
    policy: CandidatePolicy,
    k: usize,
) -> Result<MetricFile> {
    let scorer = model.scorer(&dataset.features, lambda_p)?;
    evaluate_scorer(&scorer, dataset, regime, policy, k)
}

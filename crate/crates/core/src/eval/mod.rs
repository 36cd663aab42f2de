//! Ranking metrics, bias analyses and reports.

mod curves;
mod metrics;
mod report;
mod sweep;

pub use curves::{
    frequency_curve, initial_rankings, label_rankings, model_rankings, position_shift_analysis, position_shift_curve,
    Curve, CurvePoint, FrequencyAnalysis, Rankings,
};
pub use metrics::{average_precision_at_k, map_at_10, mean, mean_ndcg, ndcg_at_k, order_by_score};
pub use report::{mean_and_stderr, ranked_labels, MetricsReport, QueryMetrics, ReportSummary, NDCG_CUTOFFS};
pub use sweep::{bias_sweep, eta_sweep, fraction_sweep, run_cell, SweepCell, SweepKind, SweepSummaryRow, SweepTable};

//! Stereotype metrics over evaluation rounds, cross-run aggregation and
//! qualitative bias flags.

pub mod aggregate;
pub mod kernels;
pub mod qualitative;
pub mod report;

pub use aggregate::{
    chi_square_uniform, meta_aggregate, spearman, summarize, welch_one_sided, AggregateReport,
    Histogram, Summary,
};
pub use kernels::{
    agreement_ratio, agreement_ratio_undecided, cai, gbc, gbc_from_parts, normalized_entropy, rsi,
    rsi_range, sii, CategoryScores, RatingDistribution, WarmthCompetencePoint,
};
pub use qualitative::{llm_qualitative_eval, FlagStatus, QualBackend, QualConfig, QualitativeEval};
pub use report::{
    compute_values, metric_series, report_for_log, MetricReport, MetricValues, SeriesPoint,
};

//! Group statistics over subjects: risk grouping, Welch t-tests, box-plot
//! summaries and score-bucket trends.

mod boxplot;
mod groups;
mod report;
mod welch;

use thiserror::Error;

pub use boxplot::{boxplot_summary, quantile_sorted, BoxplotSummary, FENCE};
pub use groups::{
    aggregate_subjects, assign_groups, average_ranks, default_buckets, feature_values, spearman,
    subgroup_trend, BucketSummary, Groups, ScoreBucket, SubjectRecord, TrendReport,
};
pub use report::{table_report, ReportRow, TableReport};
pub use welch::{student_t_two_sided, welch_t_test, GroupComparison, GroupStats, Significance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CohortError {
    #[error("degenerate sample: {reason}")]
    DegenerateSample { reason: String },
    #[error("sample of {n} values, need at least {required}")]
    SampleTooSmall { n: usize, required: usize },
    #[error("sample contains non-finite values")]
    NonFinite,
    #[error("bucket {label} is empty")]
    EmptyBucket { label: String },
    #[error("subject {subject} has no risk score")]
    MissingRiskScore { subject: String },
    #[error("subject {subject} has sessions with different risk scores")]
    ConflictingRiskScore { subject: String },
}

//! Evaluation statistics: confusion matrices, threshold selection, the
//! metric suite, exact binomial intervals and the CI-based Z test.

mod binomial;
mod compare;
mod metrics;
mod normal;
mod sankey;

pub use binomial::clopper_pearson;
pub use compare::{compare_recall, Interval, RecallComparison, Z_95};
pub use metrics::{
    balanced_accuracy_from_rates, confusion_at_threshold, f_score_from_rates, select_threshold_max_f, ConfusionMatrix,
    Metric, MetricReport,
};
pub use normal::{normal_cdf, normal_pdf, two_sided_p};
pub use sankey::{export_sankey, SankeyFlows};

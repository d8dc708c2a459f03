//! Eval-Fix splits, classification metrics and the comparison runner.

mod compare;
mod metrics;
mod split;

pub use compare::{
    comparison_split, evaluate_split, run_comparison, run_comparison_cells, summarize, variant_inputs, write_report,
    Candidate, CellValues, EvalOptions, ReportRow, Variant, REPORT_HEADER,
};
pub use metrics::{accuracy, argmax, binary_auc, ece, macro_f1, roc_auc, AucAverage, MetricsReport};
pub use split::{eval_fix_split, eval_fix_split_at, feasible_boundaries, EvalFixSplit, ID_SHARE, TRAIN_SHARE};

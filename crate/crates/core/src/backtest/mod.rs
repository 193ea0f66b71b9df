//! Walk-forward evaluation of enrichment strategies.

mod grid;
mod metrics;
mod report;

pub use grid::{
    default_models, evaluate_run, fnv1a, leakage_check, model_seed, perturb_after_train, processing_key, run_grid, select_random_stocks,
    train_artifacts, Cell, Enrichment, EvaluationRow, ExperimentGrid, Metrics, TrainArtifacts,
};
pub use metrics::{buy_and_hold, evaluate_classification, sharpe_ratio, ClassificationScores, Sharpe, Trade, TradeLog};
pub use report::{aggregate, sort_rows, write_report, write_report_file, write_summary, GroupSummary, COLUMNS, METRIC_COLUMNS};

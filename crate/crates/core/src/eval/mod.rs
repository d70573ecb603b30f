//! Completion metrics, benchmark execution and report aggregation.

mod metrics;
mod report;

use alloc::vec::Vec;

use thiserror::Error;

use crate::corpus::CompletionTask;
use crate::generate::{complete_task, GenerateError, Pipeline, Strategy};

pub use metrics::{edit_similarity, exact_match, levenshtein_distance};
pub use report::{aggregate_report, combine_repeats, weighted_average, EvalRecord, FailurePolicy, PlotData, PlotSeries, Report, ReportRow, AVG_LABEL};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error("repeated reports do not share the same rows")]
    MismatchedReports,
    #[error(transparent)]
    Generate(#[from] GenerateError),
}

/// Records are strategy-major, tasks in input order.
pub fn run_benchmark(
    pipeline: &Pipeline<'_>,
    tasks: &[CompletionTask],
    strategies: &[Strategy],
    policy: FailurePolicy,
) -> Result<(Report, Vec<EvalRecord>), EvalError> {
    if tasks.is_empty() || strategies.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut records = Vec::with_capacity(tasks.len() * strategies.len());
    for strategy in strategies {
        for task in tasks {
            records.push(complete_task(pipeline, task, strategy)?);
        }
    }
    Ok((aggregate_report(&records, policy)?, records))
}

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::TaskKind;

/// Outcome of one (task, strategy) completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub task_id: String,
    pub kind: TaskKind,
    pub strategy: String,
    pub arm: Option<usize>,
    pub retrieval_ids: Vec<String>,
    #[serde(default)]
    pub prompt_hash: String,
    pub generation: String,
    pub em: u8,
    pub es: f64,
    pub gen_len: usize,
    pub elapsed_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// What to do with records whose completion failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// Keep them: EM 0 and ES against an empty generation.
    #[default]
    Count,
    /// Drop them from every mean and count.
    Skip,
}

pub const AVG_LABEL: &str = "Avg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: String,
    /// `FB`, `RL` or `Avg`.
    pub kind: String,
    pub count: usize,
    /// Exact-match rate, in percent.
    pub em: f64,
    pub es: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub em_std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub es_std: Option<f64>,
}

/// Per-strategy rows for each task kind plus the instance-weighted average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    #[serde(default = "one")]
    pub repeats: usize,
}

fn one() -> usize {
    1
}

/// `sum(count * mean) / sum(count)`; zero when there are no instances.
pub fn weighted_average(cells: &[(usize, f64)]) -> f64 {
    let total: usize = cells.iter().map(|c| c.0).sum();
    if total == 0 {
        return 0.0;
    }
    cells.iter().map(|&(n, m)| n as f64 * m).sum::<f64>() / total as f64
}

pub fn aggregate_report(records: &[EvalRecord], policy: FailurePolicy) -> Result<Report, EvalError> {
    // strategy -> kind -> (count, em sum, es sum)
    let mut groups: BTreeMap<&str, BTreeMap<TaskKind, (usize, f64, f64)>> = BTreeMap::new();
    for r in records {
        if policy == FailurePolicy::Skip && r.error.is_some() {
            continue;
        }
        let cell = groups.entry(&r.strategy).or_default().entry(r.kind).or_default();
        cell.0 += 1;
        cell.1 += f64::from(r.em) * 100.0;
        cell.2 += r.es;
    }
    if groups.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut rows = Vec::new();
    for (strategy, kinds) in groups {
        let mut em_cells = Vec::new();
        let mut es_cells = Vec::new();
        for kind in [TaskKind::FunctionBody, TaskKind::RandomLine] {
            let Some(&(n, em, es)) = kinds.get(&kind) else { continue };
            let (em, es) = (em / n as f64, es / n as f64);
            em_cells.push((n, em));
            es_cells.push((n, es));
            rows.push(ReportRow { strategy: String::from(strategy), kind: String::from(kind.label()), count: n, em, es, em_std: None, es_std: None });
        }
        rows.push(ReportRow {
            strategy: String::from(strategy),
            kind: String::from(AVG_LABEL),
            count: em_cells.iter().map(|c| c.0).sum(),
            em: weighted_average(&em_cells),
            es: weighted_average(&es_cells),
            em_std: None,
            es_std: None,
        });
    }
    Ok(Report { rows, repeats: 1 })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var))
}

/// Cell-wise mean and sample standard deviation over repeated runs.
pub fn combine_repeats(reports: &[Report]) -> Result<Report, EvalError> {
    let first = reports.first().ok_or(EvalError::EmptyInput)?;
    let key = |r: &ReportRow| (r.strategy.clone(), r.kind.clone(), r.count);
    for other in &reports[1..] {
        if other.rows.len() != first.rows.len() || other.rows.iter().zip(&first.rows).any(|(a, b)| key(a) != key(b)) {
            return Err(EvalError::MismatchedReports);
        }
    }
    let rows = first
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let ems: Vec<f64> = reports.iter().map(|r| r.rows[i].em).collect();
            let ess: Vec<f64> = reports.iter().map(|r| r.rows[i].es).collect();
            let (em, em_std) = mean_std(&ems);
            let (es, es_std) = mean_std(&ess);
            ReportRow { em, es, em_std: Some(em_std), es_std: Some(es_std), ..row.clone() }
        })
        .collect();
    Ok(Report { rows, repeats: reports.len() })
}

/// Bar-chart series: one value per strategy for each (metric, kind).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub strategies: Vec<String>,
    pub series: Vec<PlotSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub metric: String,
    pub kind: String,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<Vec<f64>>,
}

impl Report {
    pub fn row(&self, strategy: &str, kind: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.strategy == strategy && r.kind == kind)
    }

    pub fn strategies(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if out.last() != Some(&r.strategy) {
                out.push(r.strategy.clone());
            }
        }
        out
    }

    /// `strategy,kind,count,em,es` with `em_std,es_std` appended for repeated runs.
    pub fn to_csv(&self) -> String {
        let with_std = self.rows.iter().any(|r| r.em_std.is_some());
        let mut out = String::from("strategy,kind,count,em,es");
        out.push_str(if with_std { ",em_std,es_std\n" } else { "\n" });
        for r in &self.rows {
            let _ = write!(out, "{},{},{},{:.4},{:.4}", r.strategy, r.kind, r.count, r.em, r.es);
            if with_std {
                let _ = write!(out, ",{:.4},{:.4}", r.em_std.unwrap_or(0.0), r.es_std.unwrap_or(0.0));
            }
            out.push('\n');
        }
        out
    }

    pub fn plot_data(&self) -> PlotData {
        let strategies = self.strategies();
        let mut series = Vec::new();
        for metric in ["em", "es"] {
            for kind in ["FB", "RL", AVG_LABEL] {
                if !self.rows.iter().any(|r| r.kind == kind) {
                    continue;
                }
                let pick = |r: Option<&ReportRow>, std: bool| -> f64 {
                    r.map_or(0.0, |r| match (metric, std) {
                        ("em", false) => r.em,
                        ("em", true) => r.em_std.unwrap_or(0.0),
                        (_, false) => r.es,
                        (_, true) => r.es_std.unwrap_or(0.0),
                    })
                };
                let values = strategies.iter().map(|s| pick(self.row(s, kind), false)).collect();
                let errors = (self.repeats > 1).then(|| strategies.iter().map(|s| pick(self.row(s, kind), true)).collect());
                series.push(PlotSeries { metric: String::from(metric), kind: String::from(kind), values, errors });
            }
        }
        PlotData { strategies, series }
    }
}

//! Per-arrival reports, the cumulative active (A) and active-truth (Aᵀ) fractions, and
//! aggregation across repetitions.
//!
//! A and Aᵀ are kept as raw cumulative sums of per-batch fractions (so they grow up to the
//! number of arrivals) and also divided by the number of arrivals for plotting.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::frameworks::ArrivalLog;

/// One row of the per-batch CSV. Field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchReport {
    pub batch_index: usize,
    pub drawn_noise_level: f64,
    pub selected_count: usize,
    pub selected_true_clean_count: usize,
    pub oracle_queries: usize,
    pub inactive_total: usize,
    pub test_accuracy: f64,
    #[serde(rename = "cumulative_A")]
    pub cumulative_a: f64,
    #[serde(rename = "cumulative_A_truth")]
    pub cumulative_a_truth: f64,
    pub batch_size: usize,
    #[serde(rename = "cumulative_A_normalized")]
    pub cumulative_a_normalized: f64,
    #[serde(rename = "cumulative_A_truth_normalized")]
    pub cumulative_a_truth_normalized: f64,
    pub history_recovered: usize,
}

fn fraction(count: usize, batch_size: usize) -> f64 {
    if batch_size == 0 {
        0.0
    } else {
        count as f64 / batch_size as f64
    }
}

/// Builds reports arrival by arrival, carrying the running sums.
#[derive(Debug, Clone, Default)]
pub struct ReportAccumulator {
    a: f64,
    a_truth: f64,
    arrivals: usize,
}

impl ReportAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, log: &ArrivalLog, test_accuracy: f64) -> BatchReport {
        let selected = log.selected_count();
        let truth = log.selected_true_clean_count();
        self.a += fraction(selected, log.batch_size);
        self.a_truth += fraction(truth, log.batch_size);
        self.arrivals += 1;
        let n = self.arrivals as f64;
        BatchReport {
            batch_index: log.batch_index,
            drawn_noise_level: log.drawn_noise_level,
            selected_count: selected,
            selected_true_clean_count: truth,
            oracle_queries: log.oracle_queries,
            inactive_total: log.inactive_total,
            test_accuracy,
            cumulative_a: self.a,
            cumulative_a_truth: self.a_truth,
            batch_size: log.batch_size,
            cumulative_a_normalized: self.a / n,
            cumulative_a_truth_normalized: self.a_truth / n,
            history_recovered: log.history_recovered.len(),
        }
    }
}

/// A after the given arrivals: sum of per-batch selected fractions.
pub fn active_fraction(reports: &[BatchReport]) -> f64 {
    reports
        .iter()
        .map(|r| fraction(r.selected_count, r.batch_size))
        .sum()
}

/// Aᵀ after the given arrivals: sum of per-batch fractions of truth-labeled selections.
pub fn active_truth_fraction(reports: &[BatchReport]) -> f64 {
    reports
        .iter()
        .map(|r| fraction(r.selected_true_clean_count, r.batch_size))
        .sum()
}

/// Everything one repetition of one method produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub method: String,
    pub noise_level: f64,
    pub repetition: usize,
    pub seed: u64,
    /// Identifies the configuration up to the seed; repetitions must agree on it.
    pub config_key: String,
    pub initial_accuracy: f64,
    pub reports: Vec<BatchReport>,
}

impl RunResult {
    pub fn final_accuracy(&self) -> f64 {
        self.reports
            .last()
            .map_or(self.initial_accuracy, |r| r.test_accuracy)
    }

    pub fn accuracy_series(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.test_accuracy).collect()
    }

    pub fn oracle_queries(&self) -> usize {
        self.reports.iter().map(|r| r.oracle_queries).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub method: String,
    pub noise_level: f64,
    pub repetitions: usize,
    pub initial_accuracy: f64,
    pub final_accuracy: f64,
    pub final_variance: f64,
    pub finals: Vec<f64>,
    pub accuracy_series: Vec<f64>,
    pub accuracy_variance: Vec<f64>,
    pub oracle_queries: f64,
    pub no_sel_final: Option<f64>,
    pub opt_sel_final: Option<f64>,
    pub full_clean_final: Option<f64>,
    /// Final accuracy minus the paired No-Sel final.
    pub improvement: Option<f64>,
    /// Paired Full-Clean final minus paired No-Sel final.
    pub improvement_room: Option<f64>,
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Mean and (population) variance across repetitions of one configuration.
pub fn aggregate_runs(runs: &[RunResult]) -> Result<RunSummary> {
    let first = runs
        .first()
        .ok_or_else(|| Error::validation("no runs to aggregate"))?;
    for r in runs {
        if r.config_key != first.config_key || r.method != first.method {
            return Err(Error::validation(format!(
                "cannot aggregate '{}' ({}) with '{}' ({})",
                r.method, r.config_key, first.method, first.config_key
            )));
        }
        if r.reports.len() != first.reports.len() {
            return Err(Error::validation(format!(
                "repetition {} has {} arrivals, repetition {} has {}",
                r.repetition,
                r.reports.len(),
                first.repetition,
                first.reports.len()
            )));
        }
    }
    let finals: Vec<f64> = runs.iter().map(RunResult::final_accuracy).collect();
    let (final_accuracy, final_variance) = mean_var(&finals);
    let initial: Vec<f64> = runs.iter().map(|r| r.initial_accuracy).collect();
    let queries: Vec<f64> = runs.iter().map(|r| r.oracle_queries() as f64).collect();

    let mut accuracy_series = Vec::with_capacity(first.reports.len());
    let mut accuracy_variance = Vec::with_capacity(first.reports.len());
    for i in 0..first.reports.len() {
        let at: Vec<f64> = runs.iter().map(|r| r.reports[i].test_accuracy).collect();
        let (m, v) = mean_var(&at);
        accuracy_series.push(m);
        accuracy_variance.push(v);
    }

    Ok(RunSummary {
        method: first.method.clone(),
        noise_level: first.noise_level,
        repetitions: runs.len(),
        initial_accuracy: mean_var(&initial).0,
        final_accuracy,
        final_variance,
        finals,
        accuracy_series,
        accuracy_variance,
        oracle_queries: mean_var(&queries).0,
        no_sel_final: None,
        opt_sel_final: None,
        full_clean_final: None,
        improvement: None,
        improvement_room: None,
    })
}

impl RunSummary {
    /// Fill the comparison columns from paired baseline summaries.
    pub fn with_baselines(
        mut self,
        no_sel: Option<f64>,
        opt_sel: Option<f64>,
        full_clean: Option<f64>,
    ) -> Self {
        self.no_sel_final = no_sel;
        self.opt_sel_final = opt_sel;
        self.full_clean_final = full_clean;
        self.improvement = no_sel.map(|n| self.final_accuracy - n);
        self.improvement_room = match (no_sel, full_clean) {
            (Some(n), Some(f)) => Some(f - n),
            _ => None,
        };
        self
    }
}

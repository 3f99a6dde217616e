use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::ExperimentOutcome;
use crate::error::{Error, Result};
use crate::metrics::{BatchReport, RunSummary};

pub fn write_batches_csv(path: &Path, reports: &[BatchReport]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    if reports.is_empty() {
        // header only
        w.write_record([
            "batch_index",
            "drawn_noise_level",
            "selected_count",
            "selected_true_clean_count",
            "oracle_queries",
            "inactive_total",
            "test_accuracy",
            "cumulative_A",
            "cumulative_A_truth",
            "batch_size",
            "cumulative_A_normalized",
            "cumulative_A_truth_normalized",
            "history_recovered",
        ])?;
    }
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// One line of the comparison table: Algorithm, Initial accuracy, No-Sel, Opt-Sel, Full-Clean,
/// Proposed algorithm, Improvement room, Improvement (all in percent), then the noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub algorithm: String,
    pub initial: f64,
    pub no_sel: Option<f64>,
    pub opt_sel: Option<f64>,
    pub full_clean: Option<f64>,
    pub proposed: f64,
    pub improvement_room: Option<f64>,
    pub improvement: Option<f64>,
    pub noise: f64,
}

impl ComparisonRow {
    pub const HEADER: [&'static str; 9] = [
        "Algorithm",
        "Initial accuracy",
        "No-Sel",
        "Opt-Sel",
        "Full-Clean",
        "Proposed algorithm",
        "Improvement room",
        "Improvement",
        "Noise",
    ];

    pub fn from_summary(s: &RunSummary) -> Self {
        ComparisonRow {
            algorithm: s.method.clone(),
            initial: s.initial_accuracy,
            no_sel: s.no_sel_final,
            opt_sel: s.opt_sel_final,
            full_clean: s.full_clean_final,
            proposed: s.final_accuracy,
            improvement_room: s.improvement_room,
            improvement: s.improvement,
            noise: s.noise_level,
        }
    }

    pub fn cells(&self) -> Vec<String> {
        let pct = |v: f64| format!("{:.2}%", 100.0 * v);
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), pct);
        vec![
            self.algorithm.clone(),
            pct(self.initial),
            opt(self.no_sel),
            opt(self.opt_sel),
            opt(self.full_clean),
            pct(self.proposed),
            opt(self.improvement_room),
            opt(self.improvement),
            format!("{:.2}", self.noise),
        ]
    }
}

/// Fixed-width text rendering of the comparison table.
pub fn comparison_table(rows: &[ComparisonRow]) -> String {
    let mut cells: Vec<Vec<String>> = vec![ComparisonRow::HEADER.iter().map(|s| s.to_string()).collect()];
    cells.extend(rows.iter().map(ComparisonRow::cells));
    let widths: Vec<usize> = (0..ComparisonRow::HEADER.len())
        .map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

#[derive(Serialize)]
struct RunRecord {
    method: String,
    noise: f64,
    repetition: usize,
    seed: String,
    initial_accuracy: f64,
    final_accuracy: f64,
    oracle_queries: usize,
    #[serde(rename = "cumulative_A")]
    cumulative_a: f64,
    #[serde(rename = "cumulative_A_truth")]
    cumulative_a_truth: f64,
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    evaluation: &'static str,
    run: Vec<RunRecord>,
    aggregate: Vec<&'a RunSummary>,
}

/// `summary.txt`: one `[[run]]` record per (method, noise, repetition) and one `[[aggregate]]`
/// record per (method, noise). The comparison table goes to `comparison.csv` next to it.
pub fn write_summary(path: &Path, outcomes: &[ExperimentOutcome]) -> Result<()> {
    let mut doc = SummaryDoc {
        evaluation: "test accuracy of the end-of-arrival classifier (after retraining and history reprocessing)",
        run: Vec::new(),
        aggregate: Vec::new(),
    };
    let mut seen = std::collections::BTreeSet::new();
    for o in outcomes {
        for s in std::iter::once(&o.summary).chain(&o.baselines) {
            if seen.insert((s.method.clone(), s.noise_level.to_bits())) {
                doc.aggregate.push(s);
            }
        }
    }
    let mut seen_runs = std::collections::BTreeSet::new();
    for o in outcomes {
        for r in &o.runs {
            if !seen_runs.insert((r.method.clone(), r.noise_level.to_bits(), r.repetition)) {
                continue;
            }
            let last = r.reports.last();
            doc.run.push(RunRecord {
                method: r.method.clone(),
                noise: r.noise_level,
                repetition: r.repetition,
                seed: r.seed.to_string(),
                initial_accuracy: r.initial_accuracy,
                final_accuracy: r.final_accuracy(),
                oracle_queries: r.oracle_queries(),
                cumulative_a: last.map_or(0.0, |l| l.cumulative_a),
                cumulative_a_truth: last.map_or(0.0, |l| l.cumulative_a_truth),
            });
        }
    }
    let text = toml::to_string(&doc).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;

    let mut w = csv::Writer::from_path(path.with_file_name("comparison.csv"))?;
    w.write_record(ComparisonRow::HEADER)?;
    for o in outcomes {
        w.write_record(o.row().cells())?;
    }
    w.flush()?;
    Ok(())
}

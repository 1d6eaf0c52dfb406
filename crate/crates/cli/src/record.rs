//! The JSON result record and the per-size sweep CSV.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub dataset: Option<DatasetInfo>,
    pub points: Vec<SweepPoint>,
    /// Trials that ended in an error, over all points.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    /// Rows (points, or image height).
    pub n: usize,
    /// Columns (features, or image width).
    pub d: usize,
    /// Resolved RBF scale, for kernel tasks.
    pub sigma: Option<f64>,
    pub sigma_calibrated: bool,
}

/// All trials at one sketch size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Requested sketch size (for CUR, the column-side size `s_c`).
    pub s: usize,
    /// Row-side sketch size for CUR.
    pub s_r: Option<usize>,
    /// `s` divided by the matrix order.
    pub s_over_n: f64,
    /// Closed-form reference value, when the task has one.
    pub bound: Option<f64>,
    pub trials: Vec<TrialMetrics>,
    pub summary: Summary,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub trial: usize,
    pub seed: u64,
    /// Columns actually drawn into the sketch.
    pub s_effective: Option<usize>,
    /// `‖K − K̃‖_F² / ‖K‖_F²` (or the CUR analogue).
    pub rel_fro_error: Option<f64>,
    /// Error over the error of the Frobenius-optimal U for the same C.
    pub objective_ratio: Option<f64>,
    pub misalignment: Option<f64>,
    /// Matrix entries read while fitting.
    pub entries: Option<u64>,
    /// Benchmark value and verdict.
    pub value: Option<f64>,
    pub success: Option<bool>,
    /// Wall-clock seconds per stage.
    pub timings: Option<BTreeMap<String, f64>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub completed: usize,
    pub failed: usize,
    pub median_rel_fro_error: Option<f64>,
    pub median_objective_ratio: Option<f64>,
    pub median_misalignment: Option<f64>,
    pub median_entries: Option<f64>,
    pub median_value: Option<f64>,
    pub successes: Option<usize>,
    pub success_rate: Option<f64>,
}

fn median_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| spsd_core::oracle_bench::median(&v))
}

impl Summary {
    pub fn of(trials: &[TrialMetrics]) -> Self {
        let ok: Vec<&TrialMetrics> = trials.iter().filter(|t| t.error.is_none()).collect();
        let verdicts: Vec<bool> = ok.iter().filter_map(|t| t.success).collect();
        let successes = (!verdicts.is_empty()).then(|| verdicts.iter().filter(|&&b| b).count());
        Summary {
            completed: ok.len(),
            failed: trials.len() - ok.len(),
            median_rel_fro_error: median_of(ok.iter().map(|t| t.rel_fro_error)),
            median_objective_ratio: median_of(ok.iter().map(|t| t.objective_ratio)),
            median_misalignment: median_of(ok.iter().map(|t| t.misalignment)),
            median_entries: median_of(ok.iter().map(|t| t.entries.map(|e| e as f64))),
            median_value: median_of(ok.iter().map(|t| t.value)),
            successes,
            success_rate: successes.map(|k| k as f64 / verdicts.len() as f64),
        }
    }
}

impl SweepPoint {
    pub fn new(s: usize, s_r: Option<usize>, order: usize, bound: Option<f64>, trials: Vec<TrialMetrics>) -> Self {
        let summary = Summary::of(&trials);
        SweepPoint {
            s,
            s_r,
            s_over_n: s as f64 / order as f64,
            bound,
            trials,
            summary,
        }
    }
}

impl ResultRecord {
    pub fn new(config: ExperimentConfig, dataset: Option<DatasetInfo>, points: Vec<SweepPoint>) -> Self {
        let failures = points.iter().map(|p| p.summary.failed).sum();
        ResultRecord {
            schema_version: SCHEMA_VERSION,
            config,
            dataset,
            points,
            failures,
        }
    }

    /// Drops every wall-clock field, leaving only reproducible content.
    pub fn without_timings(mut self) -> Self {
        for p in &mut self.points {
            for t in &mut p.trials {
                t.timings = None;
            }
        }
        self
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// One row per sweep point.
    pub fn write_sweep_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(SWEEP_COLUMNS)?;
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for p in &self.points {
            let s = &p.summary;
            out.write_record([
                p.s.to_string(),
                p.s_r.map_or(String::new(), |v| v.to_string()),
                p.s_over_n.to_string(),
                p.trials.len().to_string(),
                s.failed.to_string(),
                cell(s.median_rel_fro_error),
                cell(s.median_objective_ratio),
                cell(s.median_misalignment),
                cell(s.median_entries),
                cell(s.median_value),
                cell(s.success_rate),
                cell(p.bound),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub const SWEEP_COLUMNS: [&str; 12] = [
    "s",
    "s_r",
    "s_over_n",
    "trials",
    "failed",
    "rel_fro_error",
    "objective_ratio",
    "misalignment",
    "entries",
    "value",
    "success_rate",
    "bound",
];

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(i: usize, err: Option<f64>, failed: bool) -> TrialMetrics {
        TrialMetrics {
            trial: i,
            seed: i as u64,
            rel_fro_error: err,
            success: err.map(|e| e < 0.5),
            error: failed.then(|| "boom".to_string()),
            ..Default::default()
        }
    }

    #[test]
    fn summary_skips_failed_trials() {
        let s = Summary::of(&[trial(0, Some(0.1), false), trial(1, Some(0.9), false), trial(2, None, true), trial(3, Some(0.3), false)]);
        assert_eq!((s.completed, s.failed), (3, 1));
        assert_eq!(s.median_rel_fro_error, Some(0.3));
        assert_eq!(s.successes, Some(2));
        assert!(s.median_misalignment.is_none());
    }
}

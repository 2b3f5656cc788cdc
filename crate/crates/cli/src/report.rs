//! The analysis report and its plot-data companion.
//!
//! The JSON layout is described by `docs/report.schema.json`.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const REPORT_FORMAT: &str = "referkit-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEntry {
    pub level: f64,
    pub retained_count: usize,
    /// Metric on the full retained set (no resampling).
    pub point_estimate: Option<f64>,
    /// Bootstrap mean and population standard deviation.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n_valid: usize,
    pub n_skipped: usize,
    /// `"mean ± std"` at one decimal, as in a results table.
    pub display: Option<String>,
    /// Change of the one-decimal mean against the previous level:
    /// `"up"`, `"equal"` or `"down"`; absent for the first level.
    pub marker: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub version: u32,
    pub config: RunConfig,
    pub scheme: String,
    pub measure: String,
    pub metric: String,
    pub n_examples: usize,
    pub n_classes: usize,
    pub n_resamples: usize,
    pub seed: u64,
    pub levels: Vec<LevelEntry>,
}

impl Report {
    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }

    /// `level,mean,std` rows; empty cells where the bootstrap had no valid value.
    pub fn plot_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("level,mean,std\n");
        for l in &self.levels {
            out.push_str(&format!("{},{},{}\n", l.level, cell(l.mean), cell(l.std)));
        }
        out
    }
}

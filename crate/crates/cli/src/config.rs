//! Declarative configuration for `analyze`.
//!
//! A TOML file with the same field names as [`RunConfig`]. Relative paths
//! in a file are resolved against the file's directory; the report echoes
//! them exactly as written.

use std::path::{Path, PathBuf};

use referkit::referral::validate_levels;
use referkit::Metric;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    /// Five ordinal grades, used as-is.
    Pirc5,
    /// Binary referable/non-referable; five-grade inputs are collapsed at grade 2.
    Rdr2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureName {
    Entropy,
    MaxProb,
    QwkRisk,
    /// Expected risk under negative log-likelihood (equals entropy).
    NllRisk,
    /// Expected risk under 0-1 loss.
    ZeroOneRisk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Qwk,
    Auc,
}

impl From<MetricName> for Metric {
    fn from(m: MetricName) -> Metric {
        match m {
            MetricName::Qwk => Metric::Qwk,
            MetricName::Auc => Metric::Auc,
        }
    }
}

pub const DEFAULT_LEVELS: [f64; 3] = [0.0, 0.3, 0.5];
pub const DEFAULT_BOOTSTRAP: usize = 100;

fn default_levels() -> Vec<f64> {
    DEFAULT_LEVELS.to_vec()
}

fn default_bootstrap() -> usize {
    DEFAULT_BOOTSTRAP
}

fn default_measure() -> MeasureName {
    MeasureName::Entropy
}

fn default_metric() -> MetricName {
    MetricName::Qwk
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Aggregated predictions; exactly one of this and `stack`.
    pub predictions: Option<PathBuf>,
    /// Per-sample predictions, averaged before analysis.
    pub stack: Option<PathBuf>,
    /// Validation confusion matrix, required by `qwk_risk`.
    pub confusion: Option<PathBuf>,
    /// Unset means "use the classes as given".
    pub scheme: Option<SchemeName>,
    #[serde(default = "default_measure")]
    pub measure: MeasureName,
    /// Additive smoothing for the QWK-Risk validation matrix.
    #[serde(default)]
    pub smoothing: f64,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default = "default_metric")]
    pub metric: MetricName,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    /// Mandatory: there is no clock-based default.
    pub seed: u64,
    pub output: PathBuf,
    /// Defaults to the report path with extension `plot.csv`.
    pub plot_output: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::InvalidConfig(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::InvalidConfig(m.into()));
        match (&self.predictions, &self.stack) {
            (Some(_), Some(_)) => return bad("give either predictions or stack, not both"),
            (None, None) => return bad("one of predictions or stack is required"),
            _ => {}
        }
        if self.measure == MeasureName::QwkRisk && self.confusion.is_none() {
            return bad("measure qwk_risk needs a validation confusion matrix");
        }
        if self.metric == MetricName::Auc && self.scheme == Some(SchemeName::Pirc5) {
            return bad("AUC needs a binary scheme; use rdr2");
        }
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return bad("smoothing must be finite and non-negative");
        }
        if self.bootstrap == 0 {
            return bad("bootstrap must be at least 1");
        }
        if self.levels.len() < 2 {
            return bad("at least two referral levels are needed for improvement markers");
        }
        validate_levels(&self.levels).map_err(|e| CliError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    pub fn plot_path(&self) -> PathBuf {
        self.plot_output.clone().unwrap_or_else(|| self.output.with_extension("plot.csv"))
    }

    /// Copy with every relative path joined onto `base`.
    pub fn resolved(&self, base: &Path) -> RunConfig {
        let fix = |p: &Option<PathBuf>| p.as_ref().map(|p| base.join(p));
        RunConfig {
            predictions: fix(&self.predictions),
            stack: fix(&self.stack),
            confusion: fix(&self.confusion),
            output: base.join(&self.output),
            plot_output: fix(&self.plot_output),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_required_fields() {
        let c = RunConfig::from_toml("predictions = \"p.csv\"\nseed = 3\noutput = \"r.json\"\n").unwrap();
        assert_eq!(c.levels, vec![0.0, 0.3, 0.5]);
        assert_eq!(c.bootstrap, 100);
        assert_eq!(c.measure, MeasureName::Entropy);
        assert_eq!(c.metric, MetricName::Qwk);
        assert!(c.validate().is_ok());
        assert_eq!(c.plot_path(), PathBuf::from("r.plot.csv"));

        let no_seed = RunConfig::from_toml("predictions = \"p.csv\"\noutput = \"r.json\"\n");
        assert!(matches!(no_seed, Err(CliError::InvalidConfig(_))));
        let typo = RunConfig::from_toml("predictions = \"p.csv\"\nseed = 1\noutput = \"r\"\nlevel = [0.1]\n");
        assert!(matches!(typo, Err(CliError::InvalidConfig(_))));
    }

    #[test]
    fn invariants() {
        let base = RunConfig::from_toml("predictions = \"p.csv\"\nseed = 3\noutput = \"r.json\"\n").unwrap();
        let c = RunConfig { measure: MeasureName::QwkRisk, ..base.clone() };
        assert!(c.validate().is_err());
        let c = RunConfig { metric: MetricName::Auc, scheme: Some(SchemeName::Pirc5), ..base.clone() };
        assert!(c.validate().is_err());
        let c = RunConfig { levels: vec![0.3, 0.0], ..base.clone() };
        assert!(c.validate().is_err());
        let c = RunConfig { stack: Some("s.csv".into()), ..base.clone() };
        assert!(c.validate().is_err());
        let c = RunConfig { bootstrap: 0, ..base };
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::from_toml(
            "stack = \"s.csv\"\nconfusion = \"c.csv\"\nscheme = \"pirc5\"\nmeasure = \"qwk_risk\"\nseed = 9\noutput = \"o.json\"\n",
        )
        .unwrap();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }
}

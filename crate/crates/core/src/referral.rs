//! Uncertainty-ordered referral: drop the most uncertain fraction of examples
//! and measure what is left.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;

use crate::data::PredictionSet;
use crate::error::{Error, Result};
use crate::metrics::{confusion_from, qwk, roc_auc};
use crate::uncertainty::UncertaintyVector;

/// Metric evaluated on the retained examples, 0–100 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    /// Quadratic weighted kappa of the argmax confusion matrix.
    Qwk,
    /// ROC AUC of `p(class 1)` on a two-class set.
    Auc,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Qwk => "qwk",
            Metric::Auc => "auc",
        }
    }

    /// Structural checks that do not depend on which examples are retained.
    pub fn check_applicable(self, preds: &PredictionSet) -> Result<()> {
        match self {
            Metric::Auc if preds.n_classes() != 2 => {
                Err(Error::WrongClassCount { expected: 2, found: preds.n_classes() })
            }
            _ => Ok(()),
        }
    }

    pub fn evaluate(self, preds: &PredictionSet) -> Result<f64> {
        self.check_applicable(preds)?;
        match self {
            Metric::Qwk => qwk(&confusion_from(preds)),
            Metric::Auc => {
                let scores: Vec<f64> = preds.rows().map(|r| r[1]).collect();
                roc_auc(&scores, preds.labels())
            }
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn check_level(level: f64) -> Result<()> {
    if (0.0..1.0).contains(&level) {
        Ok(())
    } else {
        Err(Error::InvalidLevel(level))
    }
}

/// Number of examples referred at `level`: `floor(level · n)`.
pub fn referred_count(n: usize, level: f64) -> usize {
    (level * n as f64).floor() as usize
}

/// Indices (ascending) of the examples kept at `level`. The most uncertain
/// `floor(level · n)` are removed; among equal uncertainties the later index
/// goes first.
pub fn retained_indices(u: &[f64], level: f64) -> Result<Vec<usize>> {
    check_level(level)?;
    let n = u.len();
    let keep = n - referred_count(n, level);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| match u[a].total_cmp(&u[b]) {
        Ordering::Equal => a.cmp(&b),
        other => other,
    });
    order.truncate(keep);
    order.sort_unstable();
    Ok(order)
}

/// The subset of `preds` retained after referring the most uncertain fraction.
pub fn refer(preds: &PredictionSet, u: &UncertaintyVector, level: f64) -> Result<PredictionSet> {
    if u.len() != preds.n_examples() {
        return Err(Error::Misaligned { expected: preds.n_examples(), got: u.len() });
    }
    Ok(preds.select(&retained_indices(u.values(), level)?))
}

/// Metric value at one referral level; `value` carries the reason when the
/// metric is undefined on the retained examples.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferralPoint {
    pub level: f64,
    pub retained_count: usize,
    pub value: std::result::Result<f64, Error>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferralCurve {
    pub metric: Metric,
    pub points: Vec<ReferralPoint>,
}

impl ReferralCurve {
    pub fn levels(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.level).collect()
    }

    pub fn values(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.value.as_ref().ok().copied()).collect()
    }

    pub fn retained_counts(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.retained_count).collect()
    }

    pub fn markers(&self) -> Result<Vec<Option<Marker>>> {
        improvement_markers(&self.values())
    }
}

/// Levels must lie in [0, 1) and be strictly increasing.
pub fn validate_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::EmptyInput);
    }
    for &l in levels {
        check_level(l)?;
    }
    if let Some(w) = levels.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSpec(format!("levels must increase strictly: {} then {}", w[0], w[1])));
    }
    Ok(())
}

pub fn referral_curve(
    preds: &PredictionSet,
    u: &UncertaintyVector,
    levels: &[f64],
    metric: Metric,
) -> Result<ReferralCurve> {
    if u.len() != preds.n_examples() {
        return Err(Error::Misaligned { expected: preds.n_examples(), got: u.len() });
    }
    validate_levels(levels)?;
    metric.check_applicable(preds)?;
    let points = levels
        .par_iter()
        .map(|&level| {
            let kept = retained_indices(u.values(), level)?;
            let retained = preds.select(&kept);
            Ok(ReferralPoint { level, retained_count: kept.len(), value: metric.evaluate(&retained) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReferralCurve { metric, points })
}

/// Change between consecutive referral levels at one-decimal display precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Marker {
    Up,
    Equal,
    Down,
}

impl Marker {
    pub fn as_str(self) -> &'static str {
        match self {
            Marker::Up => "up",
            Marker::Equal => "equal",
            Marker::Down => "down",
        }
    }
}

impl fmt::Display for Marker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One-decimal rendering used by the result tables.
pub fn display_one_decimal(x: f64) -> String {
    format!("{x:.1}")
}

fn marker(prev: f64, next: f64) -> Marker {
    let a: f64 = display_one_decimal(prev).parse().unwrap_or(prev);
    let b: f64 = display_one_decimal(next).parse().unwrap_or(next);
    if a == b {
        Marker::Equal
    } else if next > prev {
        Marker::Up
    } else {
        Marker::Down
    }
}

/// One marker per adjacent pair of values; `None` where either value is missing.
pub fn improvement_markers(values: &[Option<f64>]) -> Result<Vec<Option<Marker>>> {
    if values.len() < 2 {
        return Err(Error::TooFewLevels(values.len()));
    }
    Ok(values
        .windows(2)
        .map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => Some(marker(a, b)),
            _ => None,
        })
        .collect())
}

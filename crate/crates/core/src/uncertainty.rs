//! Uncertainty scores as expected conditional risks.
//!
//! For a loss `L(p, i)` of predicting distribution `p` when the target is `i`,
//! the risk of an example is `R(x) = Σ_i L(p, i) p_i`. The negative
//! log-likelihood turns this into the predictive entropy; the negative
//! expected kappa against a validation confusion matrix gives QWK-Risk.
//! Higher values always mean more uncertain.

use crate::data::PredictionSet;
use crate::error::{Error, Result};
use crate::metrics::{weighted_kappa, ConfusionMatrix};

/// Per-example risk scores aligned with a [`PredictionSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyVector(Vec<f64>);

impl UncertaintyVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("uncertainty {v}")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> UncertaintyVector {
        UncertaintyVector(indices.iter().map(|&i| self.0[i]).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// A loss evaluated on a whole probability row against one target class.
pub trait RowLoss {
    fn loss(&self, row: &[f64], target: usize) -> f64;
}

/// `m × m` table of losses `L(j, i)`: prediction `j`, target `i`. The row loss
/// marginalizes over predictions, `L_row(i) = Σ_j p_j L(j, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTable {
    m: usize,
    values: Vec<f64>,
}

impl LossTable {
    pub fn new(m: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != m * m {
            return Err(Error::ShapeMismatch(format!("{} losses for {m} classes", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("loss table entry {v}")));
        }
        Ok(Self { m, values })
    }

    /// 0 on the diagonal, 1 elsewhere.
    pub fn zero_one(m: usize) -> Self {
        let values = (0..m * m).map(|k| if k / m == k % m { 0.0 } else { 1.0 }).collect();
        Self { m, values }
    }

    pub fn n_classes(&self) -> usize {
        self.m
    }

    pub fn get(&self, predicted: usize, target: usize) -> f64 {
        self.values[predicted * self.m + target]
    }
}

impl RowLoss for LossTable {
    fn loss(&self, row: &[f64], target: usize) -> f64 {
        row.iter().enumerate().map(|(j, &p)| p * self.get(j, target)).sum()
    }
}

/// `L(p, i) = −ln p_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegLogLikelihood;

impl RowLoss for NegLogLikelihood {
    fn loss(&self, row: &[f64], target: usize) -> f64 {
        -row[target].ln()
    }
}

/// `R(x) = Σ_i L(p, i) p_i` for every example. Targets with zero probability
/// contribute nothing, so an unbounded loss at `p_i = 0` is harmless.
pub fn risk_with<L: RowLoss + ?Sized>(preds: &PredictionSet, loss: &L) -> Result<UncertaintyVector> {
    let values = preds
        .rows()
        .map(|row| {
            let mut acc = 0.0;
            for (i, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    acc += p * loss.loss(row, i);
                }
            }
            acc
        })
        .collect();
    UncertaintyVector::new(values)
}

/// Expected conditional risk under a table-valued loss.
pub fn expected_conditional_risk(
    preds: &PredictionSet,
    loss_table: &LossTable,
) -> Result<UncertaintyVector> {
    if loss_table.m != preds.n_classes() {
        return Err(Error::ShapeMismatch(format!(
            "loss table has {} classes, predictions have {}",
            loss_table.m,
            preds.n_classes()
        )));
    }
    risk_with(preds, loss_table)
}

/// Predictive entropy in nats, `0 · ln 0 = 0`.
pub fn entropy(preds: &PredictionSet) -> UncertaintyVector {
    let values = preds
        .rows()
        .map(|row| {
            let mut acc = 0.0;
            for &p in row {
                if p > 0.0 {
                    acc -= p * p.ln();
                }
            }
            acc
        })
        .collect();
    UncertaintyVector(values)
}

/// `1 − max_i p_i`; thresholding at `1 − τ` is the classic reject rule.
pub fn max_prob_reject(preds: &PredictionSet) -> UncertaintyVector {
    let values = preds
        .rows()
        .map(|row| 1.0 - row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    UncertaintyVector(values)
}

/// Loss table `L(j, i) = −κ_QW(C + S_{j,i})` built once from a validation
/// confusion matrix. Kappa is on the [0, 1] scale.
#[derive(Debug, Clone, PartialEq)]
pub struct QwkRiskTable {
    validation: ConfusionMatrix,
    smoothing: f64,
    table: LossTable,
}

impl QwkRiskTable {
    pub fn new(validation: &ConfusionMatrix) -> Result<Self> {
        Self::with_smoothing(validation, 0.0)
    }

    /// Adds `smoothing` to every cell of the validation counts before the
    /// single-entry updates. `0.0` reproduces the unsmoothed definition.
    pub fn with_smoothing(validation: &ConfusionMatrix, smoothing: f64) -> Result<Self> {
        if !(smoothing.is_finite() && smoothing >= 0.0) {
            return Err(Error::InvalidSpec(format!("smoothing {smoothing} must be finite and >= 0")));
        }
        if validation.total() == 0 {
            return Err(Error::EmptyMatrix);
        }
        let m = validation.n_classes();
        let base: Vec<f64> = validation.counts().iter().map(|&c| c as f64 + smoothing).collect();
        let mut values = vec![0.0; m * m];
        let mut counts = base.clone();
        for j in 0..m {
            for i in 0..m {
                counts[j * m + i] += 1.0;
                values[j * m + i] = -weighted_kappa(&counts, m)?;
                counts[j * m + i] = base[j * m + i];
            }
        }
        Ok(Self { validation: validation.clone(), smoothing, table: LossTable { m, values } })
    }

    pub fn validation(&self) -> &ConfusionMatrix {
        &self.validation
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    /// The negated kappa table, prediction × target.
    pub fn loss_table(&self) -> &LossTable {
        &self.table
    }

    pub fn risk(&self, preds: &PredictionSet) -> Result<UncertaintyVector> {
        expected_conditional_risk(preds, &self.table)
    }
}

/// QWK-Risk: `R(x) = −Σ_i p_i Σ_j p_j κ_QW(C + S_{j,i})`.
pub fn qwk_risk(preds: &PredictionSet, validation: &ConfusionMatrix) -> Result<UncertaintyVector> {
    if validation.n_classes() != preds.n_classes() {
        return Err(Error::ShapeMismatch(format!(
            "validation matrix has {} classes, predictions have {}",
            validation.n_classes(),
            preds.n_classes()
        )));
    }
    QwkRiskTable::new(validation)?.risk(preds)
}

/// Empirical expected risk: the mean of per-example risks.
pub fn dataset_expected_risk(u: &UncertaintyVector) -> Result<f64> {
    if u.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(u.0.iter().sum::<f64>() / u.len() as f64)
}

/// Loss used by [`UncertaintySpec::GenericRisk`].
#[derive(Debug, Clone, PartialEq)]
pub enum GenericLoss {
    Table(LossTable),
    NegLogLikelihood,
}

/// Which uncertainty measure to compute, with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum UncertaintySpec {
    Entropy,
    MaxProbReject,
    QwkRisk { validation: ConfusionMatrix, smoothing: f64 },
    GenericRisk(GenericLoss),
}

impl UncertaintySpec {
    pub fn name(&self) -> &'static str {
        match self {
            UncertaintySpec::Entropy => "entropy",
            UncertaintySpec::MaxProbReject => "max-prob",
            UncertaintySpec::QwkRisk { .. } => "qwk-risk",
            UncertaintySpec::GenericRisk(_) => "generic-risk",
        }
    }

    pub fn compute(&self, preds: &PredictionSet) -> Result<UncertaintyVector> {
        match self {
            UncertaintySpec::Entropy => Ok(entropy(preds)),
            UncertaintySpec::MaxProbReject => Ok(max_prob_reject(preds)),
            UncertaintySpec::QwkRisk { validation, smoothing } => {
                if validation.n_classes() != preds.n_classes() {
                    return Err(Error::ShapeMismatch(format!(
                        "validation matrix has {} classes, predictions have {}",
                        validation.n_classes(),
                        preds.n_classes()
                    )));
                }
                QwkRiskTable::with_smoothing(validation, *smoothing)?.risk(preds)
            }
            UncertaintySpec::GenericRisk(GenericLoss::Table(t)) => {
                expected_conditional_risk(preds, t)
            }
            UncertaintySpec::GenericRisk(GenericLoss::NegLogLikelihood) => {
                risk_with(preds, &NegLogLikelihood)
            }
        }
    }
}

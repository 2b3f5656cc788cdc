//! Confusion matrices, quadratic weighted kappa and rank-based ROC AUC.
//!
//! Reported metrics use the 0–100 scale; `kappa_qw` gives the raw value.

use crate::data::PredictionSet;
use crate::error::{Error, Result};

/// Square count matrix with `counts[i][j]` = number of examples predicted `i`
/// whose true class is `j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConfusionMatrix {
    m: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    /// `counts` is row-major, rows indexed by prediction.
    pub fn new(m: usize, counts: Vec<u64>) -> Result<Self> {
        if m < 2 {
            return Err(Error::TooFewClasses(m));
        }
        if counts.len() != m * m {
            return Err(Error::ShapeMismatch(format!(
                "{} counts for a {m}x{m} matrix",
                counts.len()
            )));
        }
        Ok(Self { m, counts })
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let m = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != m) {
            return Err(Error::ShapeMismatch(format!("row of length {} in {m}x{m} matrix", r.len())));
        }
        Self::new(m, rows.concat())
    }

    pub fn zeros(m: usize) -> Result<Self> {
        Self::new(m, vec![0; m * m])
    }

    pub fn n_classes(&self) -> usize {
        self.m
    }

    pub fn get(&self, predicted: usize, truth: usize) -> u64 {
        self.counts[predicted * self.m + truth]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn increment(&mut self, predicted: usize, truth: usize) {
        self.counts[predicted * self.m + truth] += 1;
    }

    pub fn transpose(&self) -> Self {
        let m = self.m;
        let counts = (0..m * m).map(|k| self.counts[(k % m) * m + k / m]).collect();
        Self { m, counts }
    }

    pub fn scaled(&self, factor: u64) -> Self {
        Self { m: self.m, counts: self.counts.iter().map(|c| c * factor).collect() }
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> + '_ {
        self.counts.chunks_exact(self.m)
    }
}

/// Argmax confusion matrix of a prediction set.
pub fn confusion_from(preds: &PredictionSet) -> ConfusionMatrix {
    let m = preds.n_classes();
    let mut c = ConfusionMatrix { m, counts: vec![0; m * m] };
    for (i, &label) in preds.labels().iter().enumerate() {
        c.increment(preds.argmax(i), label);
    }
    c
}

/// Chance agreement matrix `E[i][j] = rowsum_i · colsum_j / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedAgreement {
    pub m: usize,
    pub values: Vec<f64>,
}

impl ExpectedAgreement {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m + j]
    }
}

fn marginals(counts: &[f64], m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rows = vec![0.0; m];
    let mut cols = vec![0.0; m];
    for i in 0..m {
        for j in 0..m {
            let c = counts[i * m + j];
            rows[i] += c;
            cols[j] += c;
        }
    }
    (rows, cols)
}

pub fn expected_agreement(c: &ConfusionMatrix) -> Result<ExpectedAgreement> {
    let m = c.m;
    let counts: Vec<f64> = c.counts.iter().map(|&x| x as f64).collect();
    let (rows, cols) = marginals(&counts, m);
    let n: f64 = rows.iter().sum();
    if n == 0.0 {
        return Err(Error::EmptyMatrix);
    }
    let values = (0..m * m).map(|k| rows[k / m] * cols[k % m] / n).collect();
    Ok(ExpectedAgreement { m, values })
}

/// Quadratic weighted kappa of a real-valued count matrix, on the [0, 1] scale.
///
/// Evaluated as `1 − N·Σw·C / Σw·r·c` with `w = (i−j)²`, which equals the
/// `1 − Σw·C / Σw·E` form with `E = r·cᵀ/N`. For integer counts both sums are
/// exact in `f64` up to 2⁵³, leaving a single rounded division.
pub fn weighted_kappa(counts: &[f64], m: usize) -> Result<f64> {
    debug_assert_eq!(counts.len(), m * m);
    let (rows, cols) = marginals(counts, m);
    let n: f64 = rows.iter().sum();
    if n <= 0.0 {
        return Err(Error::EmptyMatrix);
    }
    let mut disagreement = 0.0;
    let mut chance = 0.0;
    for i in 0..m {
        for j in 0..m {
            let d = i as f64 - j as f64;
            let w = d * d;
            disagreement += w * counts[i * m + j];
            chance += w * rows[i] * cols[j];
        }
    }
    if chance == 0.0 {
        return if disagreement == 0.0 { Ok(1.0) } else { Err(Error::DegenerateAgreement) };
    }
    Ok(1.0 - disagreement * n / chance)
}

/// κ_QW on the [0, 1] scale.
pub fn kappa_qw(c: &ConfusionMatrix) -> Result<f64> {
    let counts: Vec<f64> = c.counts.iter().map(|&x| x as f64).collect();
    weighted_kappa(&counts, c.m)
}

/// κ_QW on the 0–100 reporting scale.
pub fn qwk(c: &ConfusionMatrix) -> Result<f64> {
    kappa_qw(c).map(|k| 100.0 * k)
}

/// Area under the ROC curve via the Mann–Whitney statistic with midranks for
/// tied scores, on the 0–100 scale. Labels must be 0 or 1.
pub fn roc_auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Misaligned { expected: labels.len(), got: scores.len() });
    }
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l > 1) {
        return Err(Error::LabelOutOfRange { row, label, n_classes: 2 });
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {s}")));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start+1..=end share their mean
        let midrank = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            if labels[k] == 1 {
                rank_sum_pos += midrank;
            }
        }
        start = end;
    }
    let n_pos = n_pos as f64;
    let u = rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0;
    Ok(100.0 * (u / (n_pos * n_neg as f64)))
}

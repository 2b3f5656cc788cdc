//! Prediction sets, sample stacks and posterior-predictive aggregation.
//!
//! A [`PredictionSet`] keeps one probability row, one label and one opaque id
//! per example in a single record so referral never misaligns them. A
//! [`SampleStack`] holds the per-draw rows (dropout masks, variational draws or
//! ensemble members) before they are averaged into a posterior predictive.

use crate::error::{Error, Result};

/// Maximum deviation of a row sum from 1 accepted on ingestion.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Row sums that drift from 1 by more than this are divided by their sum.
/// Smaller drift is left untouched so that stored values round-trip bit-exactly.
pub const RENORMALIZE_THRESHOLD: f64 = 1e-12;

/// Per-example class probabilities with labels and ids.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    n_classes: usize,
    probs: Vec<f64>,
    labels: Vec<usize>,
    ids: Vec<String>,
}

/// Validates one probability row in place: entries in [0, 1], sum within
/// [`ROW_SUM_TOLERANCE`] of 1. Rows that drift by more than
/// [`RENORMALIZE_THRESHOLD`] are divided by their sum.
pub fn validate_row(row: &mut [f64]) -> std::result::Result<(), String> {
    if let Some(bad) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(format!("entry {bad} outside [0, 1]"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(format!("row sums to {sum}"));
    }
    if (sum - 1.0).abs() > RENORMALIZE_THRESHOLD {
        row.iter_mut().for_each(|p| *p /= sum);
    }
    Ok(())
}

fn check_rows(probs: &mut [f64], n_classes: usize, row_offset: usize) -> Result<()> {
    for (r, row) in probs.chunks_exact_mut(n_classes).enumerate() {
        validate_row(row).map_err(|reason| Error::InvalidProbabilityRow { row: row_offset + r, reason })?;
    }
    Ok(())
}

impl PredictionSet {
    /// Builds a set from one probability row per example.
    pub fn new(ids: Vec<String>, labels: Vec<usize>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_classes = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n_classes) {
            return Err(Error::ShapeMismatch(format!(
                "row {i} has {} entries, expected {n_classes}",
                r.len()
            )));
        }
        let probs = rows.into_iter().flatten().collect();
        Self::from_flat(ids, labels, n_classes, probs)
    }

    /// Builds a set from a row-major `n × n_classes` buffer.
    pub fn from_flat(
        ids: Vec<String>,
        labels: Vec<usize>,
        n_classes: usize,
        mut probs: Vec<f64>,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::TooFewClasses(n_classes));
        }
        let n = labels.len();
        if ids.len() != n || probs.len() != n * n_classes {
            return Err(Error::ShapeMismatch(format!(
                "{} ids, {} labels and {} probabilities for {} classes",
                ids.len(),
                n,
                probs.len(),
                n_classes
            )));
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
            return Err(Error::LabelOutOfRange { row, label, n_classes });
        }
        check_rows(&mut probs, n_classes, 0)?;
        Ok(Self { n_classes, probs, labels, ids })
    }

    pub fn n_examples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.n_classes..(i + 1) * self.n_classes]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.probs.chunks_exact(self.n_classes)
    }

    /// Row-major probability buffer.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Predicted class of example `i`; ties go to the lowest class index.
    pub fn argmax(&self, i: usize) -> usize {
        argmax(self.row(i))
    }

    /// Examples at `indices`, in that order. Indices may repeat.
    ///
    /// # Panics
    /// If an index is out of range.
    pub fn select(&self, indices: &[usize]) -> PredictionSet {
        let m = self.n_classes;
        let mut probs = Vec::with_capacity(indices.len() * m);
        for &i in indices {
            probs.extend_from_slice(self.row(i));
        }
        PredictionSet {
            n_classes: m,
            probs,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = i;
        }
    }
    best
}

/// `S` draws of per-example class probabilities, each an `N × M` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStack {
    n_classes: usize,
    samples: Vec<Vec<f64>>,
    labels: Vec<usize>,
    ids: Vec<String>,
}

impl SampleStack {
    /// `samples[s]` is the row-major `N × n_classes` matrix of draw `s`.
    pub fn new(
        ids: Vec<String>,
        labels: Vec<usize>,
        n_classes: usize,
        mut samples: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::TooFewClasses(n_classes));
        }
        let n = labels.len();
        if ids.len() != n {
            return Err(Error::ShapeMismatch(format!("{} ids for {n} labels", ids.len())));
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
            return Err(Error::LabelOutOfRange { row, label, n_classes });
        }
        for (s, sample) in samples.iter_mut().enumerate() {
            if sample.len() != n * n_classes {
                return Err(Error::ShapeMismatch(format!(
                    "sample {s} has {} values, expected {}",
                    sample.len(),
                    n * n_classes
                )));
            }
            check_rows(sample, n_classes, 0).map_err(|e| match e {
                Error::InvalidProbabilityRow { row, reason } => Error::InvalidProbabilityRow {
                    row,
                    reason: format!("sample {s}: {reason}"),
                },
                other => other,
            })?;
        }
        Ok(Self { n_classes, samples, labels, ids })
    }

    /// Stacks prediction sets that share ids, labels and class count.
    pub fn from_sets(sets: &[PredictionSet]) -> Result<Self> {
        let first = sets.first().ok_or(Error::EmptyStack)?;
        for (s, set) in sets.iter().enumerate().skip(1) {
            if set.n_classes != first.n_classes || set.n_examples() != first.n_examples() {
                return Err(Error::ShapeMismatch(format!(
                    "sample {s} is {}x{}, expected {}x{}",
                    set.n_examples(),
                    set.n_classes,
                    first.n_examples(),
                    first.n_classes
                )));
            }
            if set.labels != first.labels || set.ids != first.ids {
                return Err(Error::ShapeMismatch(format!(
                    "sample {s} does not share ids and labels with sample 0"
                )));
            }
        }
        Ok(Self {
            n_classes: first.n_classes,
            samples: sets.iter().map(|s| s.probs.clone()).collect(),
            labels: first.labels.clone(),
            ids: first.ids.clone(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn n_examples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn sample(&self, s: usize) -> &[f64] {
        &self.samples[s]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Draw `s` as a standalone prediction set.
    pub fn sample_set(&self, s: usize) -> PredictionSet {
        PredictionSet {
            n_classes: self.n_classes,
            probs: self.samples[s].clone(),
            labels: self.labels.clone(),
            ids: self.ids.clone(),
        }
    }
}

/// Monte Carlo posterior predictive: the cell-wise mean of the stacked draws.
pub fn aggregate(stack: &SampleStack) -> Result<PredictionSet> {
    let s = stack.n_samples();
    if s == 0 {
        return Err(Error::EmptyStack);
    }
    let mut probs = vec![0.0; stack.n_examples() * stack.n_classes];
    for sample in &stack.samples {
        for (acc, &p) in probs.iter_mut().zip(sample) {
            *acc += p;
        }
    }
    let inv = s as f64;
    probs.iter_mut().for_each(|p| *p /= inv);
    PredictionSet::from_flat(stack.ids.clone(), stack.labels.clone(), stack.n_classes, probs)
}

/// Grading scheme of a prediction set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassificationScheme {
    /// Five ordinal severity grades 0..=4.
    Pirc5,
    /// Binary referable/non-referable; `threshold` is the lowest five-grade
    /// class counted as referable.
    Rdr2 { threshold: usize },
    Generic(usize),
}

impl ClassificationScheme {
    /// Referable threshold used for the standard five-to-two mapping.
    pub const RDR_THRESHOLD: usize = 2;

    pub fn rdr() -> Self {
        ClassificationScheme::Rdr2 { threshold: Self::RDR_THRESHOLD }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            ClassificationScheme::Pirc5 => 5,
            ClassificationScheme::Rdr2 { .. } => 2,
            ClassificationScheme::Generic(m) => *m,
        }
    }
}

fn binarize_probs(probs: &[f64], n_classes: usize, threshold: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(probs.len() / n_classes * 2);
    for row in probs.chunks_exact(n_classes) {
        let neg: f64 = row[..threshold].iter().sum();
        let pos: f64 = row[threshold..].iter().sum();
        out.push(neg);
        out.push(pos);
    }
    out
}

fn rdr_threshold(n_classes: usize, scheme: &ClassificationScheme) -> Result<usize> {
    let threshold = match scheme {
        ClassificationScheme::Rdr2 { threshold } => *threshold,
        other => {
            return Err(Error::InvalidSpec(format!(
                "binarization needs an Rdr2 scheme, got {other:?}"
            )))
        }
    };
    if n_classes != 5 {
        return Err(Error::WrongClassCount { expected: 5, found: n_classes });
    }
    if threshold == 0 || threshold >= n_classes {
        return Err(Error::InvalidSpec(format!("threshold {threshold} must lie in 1..5")));
    }
    Ok(threshold)
}

/// Collapses five-grade predictions to the binary referable scheme:
/// `p(referable) = Σ_{k ≥ threshold} p_k`, labels mapped by the same threshold.
pub fn binarize_rdr(preds: &PredictionSet, scheme: &ClassificationScheme) -> Result<PredictionSet> {
    let t = rdr_threshold(preds.n_classes, scheme)?;
    PredictionSet::from_flat(
        preds.ids.clone(),
        preds.labels.iter().map(|&l| usize::from(l >= t)).collect(),
        2,
        binarize_probs(&preds.probs, preds.n_classes, t),
    )
}

/// Applies [`binarize_rdr`] to every draw of a stack.
pub fn binarize_stack(stack: &SampleStack, scheme: &ClassificationScheme) -> Result<SampleStack> {
    let t = rdr_threshold(stack.n_classes, scheme)?;
    SampleStack::new(
        stack.ids.clone(),
        stack.labels.iter().map(|&l| usize::from(l >= t)).collect(),
        2,
        stack.samples.iter().map(|s| binarize_probs(s, stack.n_classes, t)).collect(),
    )
}

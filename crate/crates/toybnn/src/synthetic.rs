//! Synthetic classification data.
//!
//! Two families:
//!
//! * **Blobs** — `M` classes with centers evenly spaced on a circle of
//!   radius 2; each point is its center plus `spread · z` per coordinate,
//!   with `z` a standard normal truncated to `|z| ≤ 3`. For two classes
//!   the centers sit at `(±2, 0)`, so any `spread < 2/3` is linearly
//!   separable.
//! * **Ordinal** — five grades along one severity axis. A latent
//!   `s = k + spread · z` (untruncated) is mapped to `x₀ = (s − 2) / 2`;
//!   `x₁` is an uninformative standard normal. Neighbouring grades overlap,
//!   so mistakes are mostly off-by-one, as with graded disease severity.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Features plus labels; `ids` are zero-padded row numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(ids: Vec<String>, features: Tensor, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if ids.len() != features.rows() || labels.len() != features.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{} ids, {} labels, {} feature rows",
                ids.len(),
                labels.len(),
                features.rows()
            )));
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &y)| y >= n_classes) {
            return Err(Error::Core(referkit::Error::LabelOutOfRange { row, label, n_classes }));
        }
        Ok(Self { ids, features, labels, n_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticSpec {
    Blobs { n: usize, n_classes: usize, spread: f64 },
    Ordinal { n: usize, spread: f64 },
}

/// Number of grades in the ordinal family.
pub const ORDINAL_CLASSES: usize = 5;
const BLOB_RADIUS: f64 = 2.0;

impl SyntheticSpec {
    pub fn n_classes(&self) -> usize {
        match *self {
            SyntheticSpec::Blobs { n_classes, .. } => n_classes,
            SyntheticSpec::Ordinal { .. } => ORDINAL_CLASSES,
        }
    }

    fn validate(&self) -> Result<()> {
        let (n, spread) = match *self {
            SyntheticSpec::Blobs { n, n_classes, spread } => {
                if n_classes < 2 {
                    return Err(Error::InvalidConfig(format!("blobs need at least 2 classes, got {n_classes}")));
                }
                (n, spread)
            }
            SyntheticSpec::Ordinal { n, spread } => (n, spread),
        };
        if n == 0 {
            return Err(Error::InvalidConfig("n must be positive".into()));
        }
        if !(spread >= 0.0 && spread.is_finite()) {
            return Err(Error::InvalidConfig(format!("spread must be finite and non-negative, got {spread}")));
        }
        Ok(())
    }
}

fn truncated_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= 3.0 {
            return z;
        }
    }
}

/// Draws a dataset; labels are uniform over the classes.
pub fn generate<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<Dataset> {
    spec.validate()?;
    let m = spec.n_classes();
    let n = match *spec {
        SyntheticSpec::Blobs { n, .. } | SyntheticSpec::Ordinal { n, .. } => n,
    };
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let k = rng.random_range(0..m);
        match *spec {
            SyntheticSpec::Blobs { spread, .. } => {
                let angle = std::f64::consts::TAU * k as f64 / m as f64;
                features.push(BLOB_RADIUS * angle.cos() + spread * truncated_normal(rng));
                features.push(BLOB_RADIUS * angle.sin() + spread * truncated_normal(rng));
            }
            SyntheticSpec::Ordinal { spread, .. } => {
                let s = k as f64 + spread * rng.sample::<f64, _>(StandardNormal);
                features.push((s - 2.0) / 2.0);
                features.push(rng.sample(StandardNormal));
            }
        }
        labels.push(k);
    }
    let width = n.to_string().len().max(6);
    let ids = (0..n).map(|i| format!("{i:0width$}")).collect();
    Dataset::new(ids, Tensor::new(n, 2, features), labels, m)
}

/// Train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.7, validation: 0.1, test: 0.2 }
    }
}

impl SplitFractions {
    /// `(round(train·n), round(validation·n), remainder)`.
    pub fn sizes(&self, n: usize) -> Result<(usize, usize, usize)> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("split fractions {parts:?} must be in [0, 1] and sum to 1")));
        }
        let train = (self.train * n as f64).round() as usize;
        let validation = ((self.validation * n as f64).round() as usize).min(n - train);
        Ok((train, validation, n - train - validation))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// Consecutive split (generated rows are already in random order).
pub fn split(data: &Dataset, fractions: &SplitFractions) -> Result<Split> {
    let (a, b, _) = fractions.sizes(data.len())?;
    let idx: Vec<usize> = (0..data.len()).collect();
    Ok(Split {
        train: data.select(&idx[..a]),
        validation: data.select(&idx[a..a + b]),
        test: data.select(&idx[a + b..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use referkit::RngStream;

    #[test]
    fn split_sizes() {
        assert_eq!(SplitFractions::default().sizes(1000).unwrap(), (700, 100, 200));
        assert_eq!(SplitFractions::default().sizes(7).unwrap(), (5, 1, 1));
        let bad = SplitFractions { train: 0.5, validation: 0.1, test: 0.1 };
        assert!(bad.sizes(10).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = SyntheticSpec::Ordinal { n: 50, spread: 0.6 };
        let a = generate(&spec, &mut RngStream::new(3)).unwrap();
        let b = generate(&spec, &mut RngStream::new(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.labels.iter().all(|&y| y < 5));
    }

    #[test]
    fn separable_blobs() {
        let spec = SyntheticSpec::Blobs { n: 500, n_classes: 2, spread: 0.5 };
        let d = generate(&spec, &mut RngStream::new(8)).unwrap();
        for i in 0..d.len() {
            let x0 = d.features.get(i, 0);
            assert_eq!(d.labels[i] == 0, x0 > 0.0);
        }
    }

    #[test]
    fn invalid_specs() {
        let mut rng = RngStream::new(0);
        assert!(generate(&SyntheticSpec::Blobs { n: 10, n_classes: 1, spread: 0.1 }, &mut rng).is_err());
        assert!(generate(&SyntheticSpec::Ordinal { n: 0, spread: 0.1 }, &mut rng).is_err());
        assert!(generate(&SyntheticSpec::Ordinal { n: 5, spread: f64::NAN }, &mut rng).is_err());
    }
}

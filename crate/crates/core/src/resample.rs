//! Seeded random streams and bootstrap evaluation of referral curves.
//!
//! All randomness in the toolkit comes from [`RngStream`]: xoshiro256++ whose
//! 256-bit state is filled with the first four outputs of SplitMix64 run from
//! the 64-bit seed. Independent substreams are taken with the xoshiro256 jump
//! function (2¹²⁸ steps each). Bounded integers use the high word of a 64×64
//! bit product, `(x · n) >> 64`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::data::PredictionSet;
use crate::error::{Error, Result};
use crate::referral::{retained_indices, validate_levels, Metric};
use crate::uncertainty::UncertaintyVector;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream(Xoshiro256PlusPlus);

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    /// Substream `index`: this stream advanced by `index + 1` jumps.
    pub fn child(&self, index: usize) -> Self {
        let mut rng = self.0.clone();
        for _ in 0..=index {
            rng.jump();
        }
        Self(rng)
    }

    /// Substreams `0..count`, equal to `child(0)..child(count - 1)`.
    pub fn children(&self, count: usize) -> Vec<Self> {
        let mut rng = self.0.clone();
        (0..count)
            .map(|_| {
                rng.jump();
                Self(rng.clone())
            })
            .collect()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        ((u128::from(self.0.next_u64()) * u128::from(n)) >> 64) as u64
    }

    /// Uniform `f64` in [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// Deterministic stream for `seed`.
pub fn rng_stream(seed: u64) -> RngStream {
    RngStream::new(seed)
}

/// Bootstrap statistics of one referral level. `mean`/`std` are `None` when
/// every resample failed (e.g. a single class survived referral).
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSummary {
    pub level: f64,
    pub retained_count: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n_valid: usize,
    pub n_skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapReport {
    pub n_resamples: usize,
    pub seed: u64,
    pub metric: Metric,
    pub per_level: Vec<LevelSummary>,
}

impl BootstrapReport {
    pub fn means(&self) -> Vec<Option<f64>> {
        self.per_level.iter().map(|l| l.mean).collect()
    }
}

/// Mean and population standard deviation, summed left to right.
pub fn mean_and_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mut sum = 0.0;
    for &v in values {
        sum += v;
    }
    let mean = sum / n;
    let mut sq = 0.0;
    for &v in values {
        let d = v - mean;
        sq += d * d;
    }
    Some((mean, (sq / n).sqrt()))
}

/// Example order used before resampling: ascending id, ties by position.
pub fn canonical_order(ids: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    order
}

/// Metric values of one resample at every level.
fn resample_metrics(
    preds: &PredictionSet,
    u: &UncertaintyVector,
    levels: &[f64],
    metric: Metric,
    rng: &mut RngStream,
) -> Vec<Result<f64>> {
    let n = preds.n_examples();
    let draws: Vec<usize> = (0..n).map(|_| rng.below(n as u64) as usize).collect();
    let sample = preds.select(&draws);
    let sample_u = u.select(&draws);
    levels
        .iter()
        .map(|&level| {
            let kept = retained_indices(sample_u.values(), level)?;
            metric.evaluate(&sample.select(&kept))
        })
        .collect()
}

/// Bootstrap the referral pipeline: `n_resamples` draws of `n` examples with
/// replacement, each re-referred with its carried uncertainty and scored.
///
/// Examples are put in canonical id order first, so file order never matters.
/// Resample `b` draws from substream `b` of `rng_stream(seed)`.
pub fn bootstrap(
    preds: &PredictionSet,
    u: &UncertaintyVector,
    levels: &[f64],
    metric: Metric,
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapReport> {
    if n_resamples == 0 {
        return Err(Error::InvalidB);
    }
    if u.len() != preds.n_examples() {
        return Err(Error::Misaligned { expected: preds.n_examples(), got: u.len() });
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    validate_levels(levels)?;
    metric.check_applicable(preds)?;

    let order = canonical_order(preds.ids());
    let preds = preds.select(&order);
    let u = u.select(&order);

    let streams = RngStream::new(seed).children(n_resamples);
    let per_resample: Vec<Vec<Result<f64>>> = streams
        .into_par_iter()
        .map(|mut rng| resample_metrics(&preds, &u, levels, metric, &mut rng))
        .collect();

    let n = preds.n_examples();
    let per_level = levels
        .iter()
        .enumerate()
        .map(|(k, &level)| {
            let valid: Vec<f64> =
                per_resample.iter().filter_map(|r| r[k].as_ref().ok().copied()).collect();
            let stats = mean_and_std(&valid);
            LevelSummary {
                level,
                retained_count: n - crate::referral::referred_count(n, level),
                mean: stats.map(|s| s.0),
                std: stats.map(|s| s.1),
                n_valid: valid.len(),
                n_skipped: n_resamples - valid.len(),
            }
        })
        .collect();
    Ok(BootstrapReport { n_resamples, seed, metric, per_level })
}

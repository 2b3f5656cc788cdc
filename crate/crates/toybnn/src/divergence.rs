//! Closed-form divergences between diagonal Gaussians and the radial sampler.
//!
//! Rényi's α-divergence uses the normalization
//! `D_α(q‖p) = 1/(α(α−1)) · log ∫ q^α p^(1−α)`, which is non-negative for
//! α ∈ (0, 1). Per coordinate, with `σ_α² = α σ_p² + (1−α) σ_q²`,
//!
//! ```text
//! log ∫ q^α p^(1−α) = −α(1−α)(μ_q−μ_p)² / (2σ_α²)
//!                     + (1−α) ln σ_q + α ln σ_p − ½ ln σ_α²
//! ```
//!
//! which follows from completing the square in the product of the two
//! Gaussian kernels (the blended precision is `σ_α² / (σ_q² σ_p²)`).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

fn check_lengths(lens: &[usize]) -> Result<()> {
    if lens.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::ShapeMismatch(format!("parameter lengths {lens:?}")));
    }
    Ok(())
}

fn check_scales(values: &[f64]) -> Result<()> {
    match values.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
        Some(&s) => Err(Error::NonPositiveScale(s)),
        None => Ok(()),
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// `KL(N(μ, σ²) ‖ N(m, s²))` summed over coordinates:
/// `Σ log(s/σ) + ((μ−m)² + σ² − s²) / (2s²)`.
pub fn kl_diag_gaussian(mu: &[f64], sigma: &[f64], m: &[f64], s: &[f64]) -> Result<f64> {
    check_lengths(&[mu.len(), sigma.len(), m.len(), s.len()])?;
    check_scales(sigma)?;
    check_scales(s)?;
    let mut total = 0.0;
    for j in 0..mu.len() {
        let d = mu[j] - m[j];
        total += (s[j] / sigma[j]).ln() + (d * d + sigma[j] * sigma[j] - s[j] * s[j]) / (2.0 * s[j] * s[j]);
    }
    Ok(total)
}

/// Gradients of [`kl_diag_gaussian`] with respect to `μ` and `σ`.
pub(crate) fn kl_diag_gaussian_grad(mu: &[f64], sigma: &[f64], m: &[f64], s: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d_mu = (0..mu.len()).map(|j| (mu[j] - m[j]) / (s[j] * s[j])).collect();
    let d_sigma = (0..mu.len()).map(|j| -1.0 / sigma[j] + sigma[j] / (s[j] * s[j])).collect();
    (d_mu, d_sigma)
}

/// Rényi α-divergence `D_α(q ‖ p)` between diagonal Gaussians.
pub fn renyi_divergence_diag(
    mu_q: &[f64],
    sigma_q: &[f64],
    mu_p: &[f64],
    sigma_p: &[f64],
    alpha: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    check_lengths(&[mu_q.len(), sigma_q.len(), mu_p.len(), sigma_p.len()])?;
    check_scales(sigma_q)?;
    check_scales(sigma_p)?;
    let mut log_integral = 0.0;
    for j in 0..mu_q.len() {
        let d = mu_q[j] - mu_p[j];
        let blend = alpha * sigma_p[j] * sigma_p[j] + (1.0 - alpha) * sigma_q[j] * sigma_q[j];
        log_integral += -alpha * (1.0 - alpha) * d * d / (2.0 * blend)
            + (1.0 - alpha) * sigma_q[j].ln()
            + alpha * sigma_p[j].ln()
            - 0.5 * blend.ln();
    }
    Ok(log_integral / (alpha * (alpha - 1.0)))
}

/// Gradients of [`renyi_divergence_diag`] with respect to `μ_q` and `σ_q`.
pub(crate) fn renyi_divergence_diag_grad(
    mu_q: &[f64],
    sigma_q: &[f64],
    mu_p: &[f64],
    sigma_p: &[f64],
    alpha: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = mu_q.len();
    let mut d_mu = Vec::with_capacity(n);
    let mut d_sigma = Vec::with_capacity(n);
    for j in 0..n {
        let d = mu_q[j] - mu_p[j];
        let sq = sigma_q[j];
        let blend = alpha * sigma_p[j] * sigma_p[j] + (1.0 - alpha) * sq * sq;
        d_mu.push(d / blend);
        d_sigma.push(-(1.0 - alpha) * d * d * sq / (blend * blend) - (1.0 / sq - sq / blend) / alpha);
    }
    (d_mu, d_sigma)
}

/// Radial noise `ε/‖ε‖₂ · r` with `ε ~ N(0, I_d)` and `r ~ N(0, 1)`.
pub fn radial_noise<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    if d == 0 {
        return Vec::new();
    }
    let mut eps: Vec<f64> = Vec::with_capacity(d);
    let mut norm_sq = 0.0;
    for _ in 0..d {
        let e: f64 = rng.sample(StandardNormal);
        norm_sq += e * e;
        eps.push(e);
    }
    let r: f64 = rng.sample(StandardNormal);
    let scale = r / norm_sq.sqrt();
    eps.iter_mut().for_each(|e| *e *= scale);
    eps
}

/// Radial draw `w = μ + σ ⊙ ε̂ · r`.
pub fn radial_sample<R: Rng + ?Sized>(mu: &[f64], sigma: &[f64], rng: &mut R) -> Vec<f64> {
    assert_eq!(mu.len(), sigma.len(), "mu and sigma lengths differ");
    let noise = radial_noise(mu.len(), rng);
    mu.iter().zip(sigma).zip(&noise).map(|((m, s), n)| m + s * n).collect()
}

/// `−log N(w; 0, I)`, the single-draw estimate of the prior cross-entropy.
pub fn standard_normal_nll(w: &[f64]) -> f64 {
    w.iter().map(|x| 0.5 * x * x + HALF_LN_2PI).sum()
}

/// `Σ log σ`: the radial posterior's entropy up to an additive constant.
pub fn radial_entropy_surrogate(sigma: &[f64]) -> f64 {
    sigma.iter().map(|s| s.ln()).sum()
}

//! Training objectives with analytic gradients.
//!
//! Stochastic objectives take their reparameterization noise as an argument
//! ("frozen noise"), so a value and its gradient are deterministic functions
//! of the parameters. That is what makes finite-difference checking possible
//! and what keeps training reproducible given a seed.
//!
//! Variational objectives are minimized in the form
//!
//! ```text
//! mean over noise draws of Σ_batch −log p(y | x, θ)  +  scale · divergence
//! ```
//!
//! where `scale = batch_size / dataset_size`, so that one pass over all
//! minibatches charges the divergence exactly once.

use rand::Rng;

use crate::autodiff::{Graph, Var};
use crate::divergence::standard_normal_nll;
use crate::error::{Error, Result};
use crate::model::{check_inputs, check_masks, DropoutMasks, ToyMlp, VariationalMlp, PRIOR_MEAN, PRIOR_STD};
use crate::tensor::Tensor;

/// A scalar objective, its parts, and its gradient.
#[derive(Debug, Clone)]
pub struct Objective {
    pub value: f64,
    /// Data term: negative log-likelihood (mean over noise draws).
    pub nll: f64,
    /// Unscaled regularizer: L2 penalty, KL, Rényi, or the radial surrogate.
    pub divergence: f64,
    /// Same layout as the parameters; for variational nets `[∂μ…, ∂ρ…]`.
    pub grads: Vec<Tensor>,
}

fn check_labels(labels: &[usize], inputs: &Tensor, n_classes: usize) -> Result<()> {
    if labels.len() != inputs.rows() {
        return Err(Error::ShapeMismatch(format!("{} labels for {} inputs", labels.len(), inputs.rows())));
    }
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &y)| y >= n_classes) {
        return Err(Error::Core(referkit::Error::LabelOutOfRange { row, label, n_classes }));
    }
    Ok(())
}

fn finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(format!("{what} = {value}")))
    }
}

fn graph_logits(g: &mut Graph, x: Var, params: &[Var], masks: Option<&[Var]>) -> Var {
    let n_layers = params.len() / 2;
    let mut h = x;
    for l in 0..n_layers {
        let z = g.matmul(h, params[2 * l]);
        let z = g.add_row(z, params[2 * l + 1]);
        if l + 1 == n_layers {
            return z;
        }
        h = g.tanh(z);
        if let Some(m) = masks {
            h = g.mul(h, m[l]);
        }
    }
    unreachable!("a network has at least one layer")
}

/// `mean_batch(−log p(y|x)) + l2 · Σ ‖Wₗ‖²` (biases are not penalized).
///
/// With `masks`, hidden activations are thinned as in dropout training.
pub fn map_objective(
    net: &ToyMlp,
    inputs: &Tensor,
    labels: &[usize],
    l2: f64,
    masks: Option<&DropoutMasks>,
) -> Result<Objective> {
    check_inputs(net.layer_sizes(), inputs)?;
    check_labels(labels, inputs, net.n_classes())?;
    if let Some(m) = masks {
        check_masks(net.layer_sizes(), inputs.rows(), m)?;
    }
    let n = inputs.rows().max(1) as f64;
    let mut g = Graph::new();
    let x = g.input(inputs.clone());
    let params: Vec<Var> = net.params().iter().map(|p| g.input(p.clone())).collect();
    let mask_vars: Option<Vec<Var>> = masks.map(|m| m.0.iter().map(|t| g.input(t.clone())).collect());
    let z = graph_logits(&mut g, x, &params, mask_vars.as_deref());
    let nll_sum = g.softmax_nll(z, labels);
    let nll = g.scale(nll_sum, 1.0 / n);
    let mut total = nll;
    let mut penalty = 0.0;
    for l in 0..params.len() / 2 {
        let sq = g.square(params[2 * l]);
        let s = g.sum(sq);
        penalty += g.value(s).item();
        let s = g.scale(s, l2);
        total = g.add(total, s);
    }
    let value = finite(g.value(total).item(), "MAP objective")?;
    let grads = g.backward(total);
    Ok(Objective {
        value,
        nll: g.value(nll).item(),
        divergence: penalty,
        grads: params.iter().zip(net.params()).map(|(v, p)| grads.get(*v, p.shape())).collect(),
    })
}

/// Regularizer of a variational objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    /// Closed-form `KL(q ‖ prior)`.
    Kl,
    /// Closed-form Rényi α-divergence `D_α(q ‖ prior)`.
    Renyi(f64),
    /// Radial surrogate: MC cross-entropy against the prior minus `Σ log σ`.
    RadialSurrogate,
}

/// Shared body of the MFVI, radial, and GVI objectives.
pub fn variational_objective(
    vnet: &VariationalMlp,
    inputs: &Tensor,
    labels: &[usize],
    noise: &[Vec<Tensor>],
    scale: f64,
    regularizer: Regularizer,
) -> Result<Objective> {
    check_inputs(vnet.layer_sizes(), inputs)?;
    check_labels(labels, inputs, vnet.n_classes())?;
    if noise.is_empty() {
        return Err(Error::InvalidConfig("at least one noise draw is required".into()));
    }
    for eps in noise {
        if eps.len() != vnet.mu().len() || eps.iter().zip(vnet.mu()).any(|(e, m)| e.shape() != m.shape()) {
            return Err(Error::ShapeMismatch("noise does not match the parameters".into()));
        }
    }
    let n_mc = noise.len() as f64;
    let mut g = Graph::new();
    let x = g.input(inputs.clone());
    let mu: Vec<Var> = vnet.mu().iter().map(|t| g.input(t.clone())).collect();
    let rho: Vec<Var> = vnet.rho().iter().map(|t| g.input(t.clone())).collect();
    let sigma: Vec<Var> = rho.iter().map(|&r| g.softplus(r)).collect();

    let mut nll_terms = Vec::with_capacity(noise.len());
    let mut ce_terms = Vec::new();
    let mut ce_const = 0.0;
    for eps in noise {
        let w: Vec<Var> = (0..mu.len())
            .map(|k| {
                let e = g.input(eps[k].clone());
                let se = g.mul(sigma[k], e);
                g.add(mu[k], se)
            })
            .collect();
        let z = graph_logits(&mut g, x, &w, None);
        nll_terms.push(g.softmax_nll(z, labels));
        if regularizer == Regularizer::RadialSurrogate {
            for (k, &wk) in w.iter().enumerate() {
                let sq = g.square(wk);
                let s = g.sum(sq);
                ce_terms.push(g.scale(s, 0.5));
                ce_const += standard_normal_nll(&vec![0.0; eps[k].len()]);
            }
        }
    }
    let nll_total = sum_vars(&mut g, &nll_terms);
    let nll = g.scale(nll_total, 1.0 / n_mc);

    let (div, div_const) = match regularizer {
        Regularizer::Kl => {
            let parts = (0..mu.len())
                .map(|k| g.kl_to_prior(mu[k], sigma[k], PRIOR_MEAN, PRIOR_STD))
                .collect::<Result<Vec<_>>>()?;
            (sum_vars(&mut g, &parts), 0.0)
        }
        Regularizer::Renyi(alpha) => {
            let parts = (0..mu.len())
                .map(|k| g.renyi_to_prior(mu[k], sigma[k], PRIOR_MEAN, PRIOR_STD, alpha))
                .collect::<Result<Vec<_>>>()?;
            (sum_vars(&mut g, &parts), 0.0)
        }
        Regularizer::RadialSurrogate => {
            let ce = sum_vars(&mut g, &ce_terms);
            let ce = g.scale(ce, 1.0 / n_mc);
            let logs: Vec<Var> = sigma
                .iter()
                .map(|&s| {
                    let l = g.log(s);
                    g.sum(l)
                })
                .collect();
            let ent = sum_vars(&mut g, &logs);
            (g.sub(ce, ent), ce_const / n_mc)
        }
    };
    let scaled = g.scale(div, scale);
    let total = g.add(nll, scaled);
    let divergence = g.value(div).item() + div_const;
    let value = finite(g.value(nll).item() + scale * divergence, "variational objective")?;
    let grads = g.backward(total);
    let mut out: Vec<Tensor> = mu.iter().zip(vnet.mu()).map(|(v, t)| grads.get(*v, t.shape())).collect();
    out.extend(rho.iter().zip(vnet.rho()).map(|(v, t)| grads.get(*v, t.shape())));
    Ok(Objective { value, nll: g.value(nll).item(), divergence, grads: out })
}

fn sum_vars(g: &mut Graph, vars: &[Var]) -> Var {
    let mut acc = vars[0];
    for &v in &vars[1..] {
        acc = g.add(acc, v);
    }
    acc
}

/// Negative ELBO with Gaussian reparameterization noise and closed-form KL.
pub fn elbo_mfvi(
    vnet: &VariationalMlp,
    inputs: &Tensor,
    labels: &[usize],
    noise: &[Vec<Tensor>],
    scale: f64,
) -> Result<Objective> {
    variational_objective(vnet, inputs, labels, noise, scale, Regularizer::Kl)
}

/// Radial objective; `noise` should come from [`crate::WeightNoise::Radial`].
/// Constant terms of the entropy are dropped.
pub fn radial_objective(
    vnet: &VariationalMlp,
    inputs: &Tensor,
    labels: &[usize],
    noise: &[Vec<Tensor>],
    scale: f64,
) -> Result<Objective> {
    variational_objective(vnet, inputs, labels, noise, scale, Regularizer::RadialSurrogate)
}

/// Expected NLL plus the Rényi α-divergence to the prior.
pub fn gvi_objective(
    vnet: &VariationalMlp,
    inputs: &Tensor,
    labels: &[usize],
    noise: &[Vec<Tensor>],
    scale: f64,
    alpha: f64,
) -> Result<Objective> {
    variational_objective(vnet, inputs, labels, noise, scale, Regularizer::Renyi(alpha))
}

/// Central-difference step used by [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-6;

/// Largest `|analytic − numeric| / (|numeric| + 1e-8)` over `n_coords`
/// randomly chosen coordinates of the flat parameter list.
pub fn grad_check<F, R>(objective: F, params: &[Tensor], n_coords: usize, rng: &mut R) -> Result<f64>
where
    F: Fn(&[Tensor]) -> Result<(f64, Vec<Tensor>)>,
    R: Rng + ?Sized,
{
    let (value, analytic) = objective(params)?;
    finite(value, "objective")?;
    let total: usize = params.iter().map(Tensor::len).sum();
    let mut worst: f64 = 0.0;
    for _ in 0..n_coords.min(total) {
        let mut flat = rng.random_range(0..total);
        let mut t = 0;
        while flat >= params[t].len() {
            flat -= params[t].len();
            t += 1;
        }
        let eval = |delta: f64| -> Result<f64> {
            let mut p = params.to_vec();
            p[t].data_mut()[flat] += delta;
            finite(objective(&p)?.0, "objective")
        };
        let numeric = (eval(GRAD_CHECK_STEP)? - eval(-GRAD_CHECK_STEP)?) / (2.0 * GRAD_CHECK_STEP);
        let a = analytic[t].data()[flat];
        finite(a, "analytic gradient")?;
        worst = worst.max((a - numeric).abs() / (numeric.abs() + 1e-8));
    }
    Ok(worst)
}

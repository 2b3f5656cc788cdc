//! Tiny multilayer perceptrons: deterministic and mean-field variational.
//!
//! Hidden layers use `tanh`; the last layer emits raw logits that
//! [`forward`] turns into softmax probabilities. Parameters are stored as a
//! flat list `[W₀, b₀, W₁, b₁, …]` with `Wₗ` of shape `in × out` and `bₗ`
//! of shape `1 × out`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::divergence::radial_noise;
use crate::error::{Error, Result};
use crate::tensor::{softmax_rows, softplus, softplus_inv, Tensor};

/// Prior mean of every weight.
pub const PRIOR_MEAN: f64 = 0.0;
/// Prior standard deviation of every weight.
pub const PRIOR_STD: f64 = 1.0;

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(Error::InvalidConfig(format!("layer sizes {layer_sizes:?}")));
    }
    Ok(())
}

/// Shapes of the flat parameter list for `layer_sizes`.
pub fn param_shapes(layer_sizes: &[usize]) -> Vec<(usize, usize)> {
    layer_sizes
        .windows(2)
        .flat_map(|w| [(w[0], w[1]), (1, w[1])])
        .collect()
}

/// LeCun-normal weights (`N(0, 1/fan_in)`), zero biases.
fn init_params<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Vec<Tensor> {
    param_shapes(layer_sizes)
        .into_iter()
        .map(|(r, c)| {
            if r == 1 {
                Tensor::zeros(r, c)
            } else {
                let scale = 1.0 / (r as f64).sqrt();
                let data = (0..r * c).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
                Tensor::new(r, c, data)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyMlp {
    layer_sizes: Vec<usize>,
    params: Vec<Tensor>,
    dropout_rate: f64,
}

impl ToyMlp {
    pub fn init<R: Rng + ?Sized>(layer_sizes: &[usize], dropout_rate: f64, rng: &mut R) -> Result<Self> {
        check_sizes(layer_sizes)?;
        Self::from_params(layer_sizes, init_params(layer_sizes, rng), dropout_rate)
    }

    pub fn from_params(layer_sizes: &[usize], params: Vec<Tensor>, dropout_rate: f64) -> Result<Self> {
        check_sizes(layer_sizes)?;
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::InvalidConfig(format!("dropout rate {dropout_rate} outside [0, 1)")));
        }
        let shapes = param_shapes(layer_sizes);
        if shapes.len() != params.len() || shapes.iter().zip(&params).any(|(s, p)| *s != p.shape()) {
            return Err(Error::ShapeMismatch(format!("parameters do not fit layer sizes {layer_sizes:?}")));
        }
        Ok(Self { layer_sizes: layer_sizes.to_vec(), params, dropout_rate })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn n_classes(&self) -> usize {
        *self.layer_sizes.last().expect("validated layer sizes")
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn weights(&self, layer: usize) -> &Tensor {
        &self.params[2 * layer]
    }

    pub fn bias(&self, layer: usize) -> &Tensor {
        &self.params[2 * layer + 1]
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }
}

/// Binary keep-masks, one `n × width` tensor per hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks(pub Vec<Tensor>);

impl DropoutMasks {
    /// Bernoulli(1 − rate) masks for a batch of `n` inputs.
    pub fn sample<R: Rng + ?Sized>(layer_sizes: &[usize], n: usize, rate: f64, rng: &mut R) -> Self {
        let hidden = &layer_sizes[1..layer_sizes.len() - 1];
        DropoutMasks(
            hidden
                .iter()
                .map(|&w| {
                    let data = (0..n * w).map(|_| if rng.random::<f64>() < rate { 0.0 } else { 1.0 }).collect();
                    Tensor::new(n, w, data)
                })
                .collect(),
        )
    }

    pub fn ones(layer_sizes: &[usize], n: usize) -> Self {
        let hidden = &layer_sizes[1..layer_sizes.len() - 1];
        DropoutMasks(hidden.iter().map(|&w| Tensor::filled(n, w, 1.0)).collect())
    }
}

/// How hidden activations are thinned.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Thinning<'a> {
    /// Multiply by binary masks.
    Masks(&'a DropoutMasks),
    /// Multiply by a constant (the keep probability for a deterministic pass).
    Scale(f64),
}

pub(crate) fn check_masks(layer_sizes: &[usize], n: usize, masks: &DropoutMasks) -> Result<()> {
    let hidden = &layer_sizes[1..layer_sizes.len() - 1];
    if masks.0.len() != hidden.len() || masks.0.iter().zip(hidden).any(|(m, &w)| m.shape() != (n, w)) {
        return Err(Error::ShapeMismatch("dropout masks do not match the network".into()));
    }
    Ok(())
}

pub(crate) fn check_inputs(layer_sizes: &[usize], inputs: &Tensor) -> Result<()> {
    if inputs.cols() != layer_sizes[0] {
        return Err(Error::ShapeMismatch(format!(
            "input width {} but the network expects {}",
            inputs.cols(),
            layer_sizes[0]
        )));
    }
    Ok(())
}

/// Logits for `inputs` under `params`.
pub(crate) fn logits(params: &[Tensor], inputs: &Tensor, thinning: Thinning<'_>) -> Tensor {
    let n_layers = params.len() / 2;
    let mut h = inputs.clone();
    for l in 0..n_layers {
        let z = h.matmul(&params[2 * l]).add_row(&params[2 * l + 1]);
        if l + 1 == n_layers {
            return z;
        }
        h = z.map(f64::tanh);
        match thinning {
            Thinning::Masks(m) => h = h.zip_map(&m.0[l], |a, b| a * b),
            Thinning::Scale(k) if k != 1.0 => h = h.map(|a| a * k),
            Thinning::Scale(_) => {}
        }
    }
    unreachable!("a network has at least one layer")
}

/// Softmax class probabilities, one row per input.
///
/// With `masks`, every hidden activation is multiplied by its binary mask
/// entry. Without, hidden activations are scaled by the keep probability
/// `1 − dropout_rate`, the usual deterministic approximation.
pub fn forward(net: &ToyMlp, inputs: &Tensor, masks: Option<&DropoutMasks>) -> Result<Tensor> {
    check_inputs(&net.layer_sizes, inputs)?;
    let thinning = match masks {
        Some(m) => {
            check_masks(&net.layer_sizes, inputs.rows(), m)?;
            Thinning::Masks(m)
        }
        None => Thinning::Scale(1.0 - net.dropout_rate),
    };
    Ok(softmax_rows(&logits(&net.params, inputs, thinning)))
}

/// Which reparameterized noise a variational network draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightNoise {
    /// `ε ~ N(0, I)` per coordinate.
    Gaussian,
    /// `ε/‖ε‖₂ · r`, normalized separately for each weight matrix and bias.
    Radial,
}

impl WeightNoise {
    /// One noise tensor per parameter tensor.
    pub fn draw<R: Rng + ?Sized>(self, layer_sizes: &[usize], rng: &mut R) -> Vec<Tensor> {
        param_shapes(layer_sizes)
            .into_iter()
            .map(|(r, c)| {
                let data = match self {
                    WeightNoise::Gaussian => (0..r * c).map(|_| rng.sample(StandardNormal)).collect(),
                    WeightNoise::Radial => radial_noise(r * c, rng),
                };
                Tensor::new(r, c, data)
            })
            .collect()
    }
}

/// Fully factorized Gaussian posterior `N(μ, softplus(ρ)²)` over every
/// parameter of a [`ToyMlp`], with a `N(0, 1)` prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalMlp {
    layer_sizes: Vec<usize>,
    mu: Vec<Tensor>,
    rho: Vec<Tensor>,
}

impl VariationalMlp {
    /// Means initialized like a deterministic net, scales set to `init_sigma`.
    pub fn init<R: Rng + ?Sized>(layer_sizes: &[usize], init_sigma: f64, rng: &mut R) -> Result<Self> {
        check_sizes(layer_sizes)?;
        if !(init_sigma > 0.0 && init_sigma.is_finite()) {
            return Err(Error::NonPositiveScale(init_sigma));
        }
        let mu = init_params(layer_sizes, rng);
        let rho = mu.iter().map(|t| Tensor::filled(t.rows(), t.cols(), softplus_inv(init_sigma))).collect();
        Ok(Self { layer_sizes: layer_sizes.to_vec(), mu, rho })
    }

    pub fn from_parts(layer_sizes: &[usize], mu: Vec<Tensor>, rho: Vec<Tensor>) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let shapes = param_shapes(layer_sizes);
        let fits = |ts: &[Tensor]| ts.len() == shapes.len() && shapes.iter().zip(ts).all(|(s, t)| *s == t.shape());
        if !fits(&mu) || !fits(&rho) {
            return Err(Error::ShapeMismatch(format!("parameters do not fit layer sizes {layer_sizes:?}")));
        }
        Ok(Self { layer_sizes: layer_sizes.to_vec(), mu, rho })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn n_classes(&self) -> usize {
        *self.layer_sizes.last().expect("validated layer sizes")
    }

    pub fn mu(&self) -> &[Tensor] {
        &self.mu
    }

    pub fn rho(&self) -> &[Tensor] {
        &self.rho
    }

    pub fn mu_mut(&mut self) -> &mut [Tensor] {
        &mut self.mu
    }

    pub fn rho_mut(&mut self) -> &mut [Tensor] {
        &mut self.rho
    }

    /// `[μ…, ρ…]`, the layout of variational gradients.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.mu.iter_mut().chain(self.rho.iter_mut()).collect()
    }

    pub fn sigma(&self) -> Vec<Tensor> {
        self.rho.iter().map(|r| r.map(softplus)).collect()
    }

    /// Weights `μ + σ ⊙ noise`.
    pub fn weights_with(&self, noise: &[Tensor]) -> Vec<Tensor> {
        self.mu
            .iter()
            .zip(&self.rho)
            .zip(noise)
            .map(|((m, r), e)| {
                let s = r.map(softplus);
                let se = s.zip_map(e, |a, b| a * b);
                m.zip_map(&se, |a, b| a + b)
            })
            .collect()
    }

    /// A deterministic network with weights drawn from the posterior.
    pub fn sample_net<R: Rng + ?Sized>(&self, noise: WeightNoise, rng: &mut R) -> ToyMlp {
        let eps = noise.draw(&self.layer_sizes, rng);
        ToyMlp { layer_sizes: self.layer_sizes.clone(), params: self.weights_with(&eps), dropout_rate: 0.0 }
    }

    /// The network at the posterior means.
    pub fn mean_net(&self) -> ToyMlp {
        ToyMlp { layer_sizes: self.layer_sizes.clone(), params: self.mu.clone(), dropout_rate: 0.0 }
    }
}

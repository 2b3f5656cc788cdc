//! Minibatch training, model bundles, and sampled prediction.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use referkit::{RngStream, SampleStack};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward, DropoutMasks, ToyMlp, VariationalMlp, WeightNoise};
use crate::objective::{map_objective, variational_objective, Objective, Regularizer};
use crate::synthetic::Dataset;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Map,
    McDropout,
    Mfvi,
    Radial,
    Gvi,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Map, Method::McDropout, Method::Mfvi, Method::Radial, Method::Gvi];

    pub fn name(self) -> &'static str {
        match self {
            Method::Map => "map",
            Method::McDropout => "mc_dropout",
            Method::Mfvi => "mfvi",
            Method::Radial => "radial",
            Method::Gvi => "gvi",
        }
    }

    fn is_variational(self) -> bool {
        matches!(self, Method::Mfvi | Method::Radial | Method::Gvi)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.replace('-', "_"))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// Member count used when a deep ensemble is asked for without a size.
pub const DEFAULT_ENSEMBLE_SIZE: usize = 3;

/// Hyperparameters. Everything not derived from the method is a toolkit
/// choice; see the field defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    /// Hidden layer widths; input width and class count come from the data.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// L2 weight decay for MAP and MC dropout.
    pub l2_weight: f64,
    /// Used by MAP (training only) and MC dropout (training and prediction).
    pub dropout_rate: f64,
    /// Noise draws per optimization step for variational methods.
    pub n_train_mc: usize,
    pub alpha: f64,
    /// Initial posterior standard deviation for variational methods.
    pub init_sigma: f64,
    /// Independently initialized members; more than one makes a deep ensemble
    /// (usually [`DEFAULT_ENSEMBLE_SIZE`] MAP nets).
    pub ensemble_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Map,
            hidden: vec![16, 16],
            epochs: 100,
            batch_size: 32,
            learning_rate: 0.01,
            l2_weight: 1e-4,
            dropout_rate: 0.1,
            n_train_mc: 1,
            alpha: 0.5,
            init_sigma: 0.05,
            ensemble_size: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.epochs == 0 || self.batch_size == 0 || self.n_train_mc == 0 || self.ensemble_size == 0 {
            return bad("epochs, batch_size, n_train_mc and ensemble_size must be positive".into());
        }
        if self.hidden.contains(&0) {
            return bad(format!("hidden widths {:?}", self.hidden));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {}", self.learning_rate));
        }
        if !(self.l2_weight >= 0.0 && self.l2_weight.is_finite()) {
            return bad(format!("l2 weight {}", self.l2_weight));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {}", self.dropout_rate));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidAlpha(self.alpha));
        }
        if !(self.init_sigma > 0.0 && self.init_sigma.is_finite()) {
            return Err(Error::NonPositiveScale(self.init_sigma));
        }
        Ok(())
    }

    fn layer_sizes(&self, data: &Dataset) -> Vec<usize> {
        let mut sizes = vec![data.features.cols()];
        sizes.extend(&self.hidden);
        sizes.push(data.n_classes);
        sizes
    }
}

/// Adam with the usual defaults (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    t: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Self {
        let zeros = || shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect();
        Self { lr, t: 0, m: zeros(), v: zeros() }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (k, p) in params.iter_mut().enumerate() {
            let g = grads[k].data();
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                m[j] = Self::B1 * m[j] + (1.0 - Self::B1) * g[j];
                v[j] = Self::B2 * v[j] + (1.0 - Self::B2) * g[j] * g[j];
                *w -= self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// One trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Member {
    Deterministic { net: ToyMlp },
    Variational { net: VariationalMlp, noise: WeightNoise },
}

pub const BUNDLE_FORMAT: &str = "referkit-toy-model";
pub const BUNDLE_VERSION: u32 = 1;

/// Trained members plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format: String,
    pub version: u32,
    pub method: Method,
    pub config: TrainConfig,
    pub members: Vec<Member>,
}

impl ModelBundle {
    pub fn n_classes(&self) -> usize {
        match &self.members[0] {
            Member::Deterministic { net } => net.n_classes(),
            Member::Variational { net, .. } => net.n_classes(),
        }
    }
}

fn train_member(config: &TrainConfig, data: &Dataset, stream: &RngStream) -> Result<Member> {
    let sizes = config.layer_sizes(data);
    let mut init_rng = stream.child(0);
    let mut rng = stream.child(1);
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();

    let noise_kind = match config.method {
        Method::Radial => WeightNoise::Radial,
        _ => WeightNoise::Gaussian,
    };
    let regularizer = match config.method {
        Method::Mfvi => Regularizer::Kl,
        Method::Radial => Regularizer::RadialSurrogate,
        _ => Regularizer::Renyi(config.alpha),
    };
    let dropout = match config.method {
        Method::Map | Method::McDropout => config.dropout_rate,
        _ => 0.0,
    };

    let mut det = None;
    let mut var = None;
    let mut adam;
    if config.method.is_variational() {
        let v = VariationalMlp::init(&sizes, config.init_sigma, &mut init_rng)?;
        let shapes: Vec<_> = v.mu().iter().chain(v.rho()).map(Tensor::shape).collect();
        adam = Adam::new(config.learning_rate, &shapes);
        var = Some(v);
    } else {
        let net = ToyMlp::init(&sizes, dropout, &mut init_rng)?;
        let shapes: Vec<_> = net.params().iter().map(Tensor::shape).collect();
        adam = Adam::new(config.learning_rate, &shapes);
        det = Some(net);
    }

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let x = data.features.select_rows(batch);
            let y: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
            let step = if let Some(net) = det.as_mut() {
                let masks = (dropout > 0.0).then(|| DropoutMasks::sample(&sizes, batch.len(), dropout, &mut rng));
                map_objective(net, &x, &y, config.l2_weight, masks.as_ref()).map(|obj| {
                    let mut params: Vec<&mut Tensor> = net.params_mut().iter_mut().collect();
                    adam.step(&mut params, &obj.grads);
                })
            } else {
                let v = var.as_mut().expect("variational member");
                let noise: Vec<Vec<Tensor>> =
                    (0..config.n_train_mc).map(|_| noise_kind.draw(&sizes, &mut rng)).collect();
                let scale = batch.len() as f64 / n as f64;
                variational_objective(v, &x, &y, &noise, scale, regularizer).map(|obj: Objective| {
                    adam.step(&mut v.params_mut(), &obj.grads);
                })
            };
            match step {
                Ok(()) => {}
                Err(Error::NonFinite(_)) => return Err(Error::Diverged { epoch, loss: f64::NAN }),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(match (det, var) {
        (Some(net), _) => Member::Deterministic { net },
        (_, Some(net)) => Member::Variational { net, noise: noise_kind },
        _ => unreachable!("one member kind is always built"),
    })
}

/// Trains `config.ensemble_size` members; member `k` uses child stream `k`
/// of the configured seed. Deterministic given the seed.
pub fn train(config: &TrainConfig, data: &Dataset) -> Result<ModelBundle> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Core(referkit::Error::EmptyInput));
    }
    let root = RngStream::new(config.seed);
    let members = (0..config.ensemble_size)
        .map(|k| train_member(config, data, &root.child(k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelBundle {
        format: BUNDLE_FORMAT.into(),
        version: BUNDLE_VERSION,
        method: config.method,
        config: config.clone(),
        members,
    })
}

/// Number of samples [`predict_stack`] emits for a request of `s`.
///
/// A deterministic single model repeats its prediction `s` times; an
/// ensemble of deterministic members contributes one sample per member;
/// stochastic members contribute `s` samples each.
pub fn n_predictive_samples(bundle: &ModelBundle, s: usize) -> usize {
    let stochastic = bundle.method != Method::Map;
    match (stochastic, bundle.members.len()) {
        (false, 1) => s,
        (false, k) => k,
        (true, k) => k * s,
    }
}

/// Monte Carlo predictive samples for `data`.
///
/// Sample `j` draws its masks or weights from `rng.child(j)`; samples are
/// ordered member-major.
pub fn predict_stack(bundle: &ModelBundle, data: &Dataset, s: usize, rng: &RngStream) -> Result<SampleStack> {
    if s == 0 {
        return Err(Error::InvalidConfig("at least one predictive sample is required".into()));
    }
    if bundle.members.is_empty() {
        return Err(Error::InvalidConfig("model bundle has no members".into()));
    }
    let total = n_predictive_samples(bundle, s);
    let per_member = total / bundle.members.len();
    let mut samples = Vec::with_capacity(total);
    for (k, member) in bundle.members.iter().enumerate() {
        for i in 0..per_member {
            let j = k * per_member + i;
            let mut r = rng.child(j);
            let probs = match member {
                Member::Deterministic { net } if bundle.method == Method::McDropout => {
                    let masks = DropoutMasks::sample(net.layer_sizes(), data.len(), net.dropout_rate(), &mut r);
                    forward(net, &data.features, Some(&masks))?
                }
                Member::Deterministic { net } => forward(net, &data.features, None)?,
                Member::Variational { net, noise } => forward(&net.sample_net(*noise, &mut r), &data.features, None)?,
            };
            samples.push(probs.into_data());
        }
    }
    Ok(SampleStack::new(data.ids.clone(), data.labels.clone(), bundle.n_classes(), samples)?)
}

/// Share of rows whose argmax equals the label.
pub fn accuracy(probs: &Tensor, labels: &[usize]) -> f64 {
    let hits = (0..probs.rows()).filter(|&i| referkit::data::argmax(probs.row(i)) == labels[i]).count();
    hits as f64 / probs.rows().max(1) as f64
}

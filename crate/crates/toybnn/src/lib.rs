//! Tiny Bayesian neural networks for exercising the referral pipeline.
//!
//! Everything here is desk-scale: two-dimensional synthetic inputs, a
//! `tanh` multilayer perceptron, and a hand-written reverse-mode tape.
//! Five training methods are available — MAP, MC dropout, mean-field VI,
//! radial VI and Rényi-divergence generalized VI — and any of them can be
//! ensembled.

pub mod autodiff;
pub mod divergence;
pub mod error;
pub mod model;
pub mod objective;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use divergence::{kl_diag_gaussian, radial_sample, renyi_divergence_diag};
pub use error::{Error, Result};
pub use model::{forward, DropoutMasks, ToyMlp, VariationalMlp, WeightNoise};
pub use objective::{elbo_mfvi, grad_check, gvi_objective, map_objective, radial_objective, Objective};
pub use synthetic::{generate, split, Dataset, SplitFractions, SyntheticSpec};
pub use tensor::Tensor;
pub use train::{predict_stack, train, Method, ModelBundle, TrainConfig, DEFAULT_ENSEMBLE_SIZE};

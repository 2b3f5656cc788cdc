//! Synthetic data generation and toy-model commands.

use std::path::Path;

use referkit::{aggregate, confusion_from, qwk_risk, referral_curve, Metric, RngStream};
use referkit_toybnn::{
    generate, predict_stack, split, train, Dataset, Method, ModelBundle, SplitFractions, SyntheticSpec, TrainConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::formats::{save_confusion, save_dataset, save_stack, write_atomic};

/// What `gen-data` writes, echoed to `generation.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSpec {
    pub data: SyntheticSpec,
    pub fractions: SplitFractions,
    pub seed: u64,
    /// Model used to produce the validation confusion matrix.
    pub model: TrainConfig,
}

impl GenerationSpec {
    pub fn new(data: SyntheticSpec, seed: u64) -> Self {
        Self { data, fractions: SplitFractions::default(), seed, model: TrainConfig { seed, ..Default::default() } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub spec: GenerationSpec,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

fn spec_err(e: referkit_toybnn::Error) -> CliError {
    match e {
        referkit_toybnn::Error::InvalidConfig(m) => CliError::InvalidSpec(m),
        other => other.into(),
    }
}

/// Writes `train.csv`, `validation.csv`, `test.csv`,
/// `validation_confusion.csv` and `generation.json` into `out_dir`.
///
/// Data come from child stream 0 of the seed; the confusion matrix comes
/// from a MAP model trained on the training split and evaluated on the
/// validation split.
pub fn generate_synthetic(spec: &GenerationSpec, out_dir: &Path) -> Result<GenerationSummary> {
    let data = generate(&spec.data, &mut RngStream::new(spec.seed).child(0)).map_err(spec_err)?;
    let parts = split(&data, &spec.fractions).map_err(spec_err)?;
    if parts.train.is_empty() || parts.validation.is_empty() {
        return Err(CliError::InvalidSpec("training and validation splits must be non-empty".into()));
    }
    let model = TrainConfig { method: Method::Map, ensemble_size: 1, ..spec.model.clone() };
    let bundle = train(&model, &parts.train).map_err(spec_err)?;
    let stack = predict_stack(&bundle, &parts.validation, 1, &RngStream::new(spec.seed).child(1))?;
    let confusion = confusion_from(&aggregate(&stack)?);

    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    save_dataset(&out_dir.join("train.csv"), &parts.train)?;
    save_dataset(&out_dir.join("validation.csv"), &parts.validation)?;
    save_dataset(&out_dir.join("test.csv"), &parts.test)?;
    save_confusion(&out_dir.join("validation_confusion.csv"), &confusion)?;
    let summary = GenerationSummary {
        spec: spec.clone(),
        train: parts.train.len(),
        validation: parts.validation.len(),
        test: parts.test.len(),
    };
    let mut json = serde_json::to_string_pretty(&summary).expect("summaries always serialize");
    json.push('\n');
    write_atomic(&out_dir.join("generation.json"), json.as_bytes())?;
    Ok(summary)
}

pub fn save_model(path: &Path, bundle: &ModelBundle) -> Result<()> {
    let mut json = serde_json::to_string(bundle).expect("bundles always serialize");
    json.push('\n');
    write_atomic(path, json.as_bytes())
}

pub fn load_model(path: &Path) -> Result<ModelBundle> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bundle: ModelBundle = serde_json::from_str(&text).map_err(|e| CliError::io(path, e))?;
    if bundle.format != referkit_toybnn::train::BUNDLE_FORMAT
        || bundle.version != referkit_toybnn::train::BUNDLE_VERSION
    {
        return Err(CliError::io(path, format!("unsupported model format {} v{}", bundle.format, bundle.version)));
    }
    Ok(bundle)
}

/// `train-toy`.
pub fn train_toy(config: &TrainConfig, data: &Dataset, out: &Path) -> Result<ModelBundle> {
    let bundle = train(config, data)?;
    save_model(out, &bundle)?;
    Ok(bundle)
}

/// `predict-toy`: writes a stack file.
pub fn predict_toy(bundle: &ModelBundle, data: &Dataset, samples: usize, seed: u64, out: &Path) -> Result<()> {
    let stack = predict_stack(bundle, data, samples, &RngStream::new(seed))?;
    save_stack(out, &stack)
}

/// One seeded run of the ordinal referral experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferralOutcome {
    pub qwk_full: f64,
    pub qwk_referred: f64,
}

/// Generates the ordinal dataset, trains `config` on its training split,
/// builds a validation confusion matrix from the model's own predictions,
/// and reports test QWK before and after referring `level` of the test set
/// by QWK-Risk.
pub fn ordinal_referral_experiment(
    config: &TrainConfig,
    n: usize,
    spread: f64,
    samples: usize,
    level: f64,
) -> Result<ReferralOutcome> {
    let root = RngStream::new(config.seed);
    let data = generate(&SyntheticSpec::Ordinal { n, spread }, &mut root.child(0)).map_err(spec_err)?;
    let parts = split(&data, &SplitFractions::default())?;
    let bundle = train(config, &parts.train)?;
    let validation = aggregate(&predict_stack(&bundle, &parts.validation, samples, &root.child(1))?)?;
    let test = aggregate(&predict_stack(&bundle, &parts.test, samples, &root.child(2))?)?;
    let u = qwk_risk(&test, &confusion_from(&validation))?;
    let curve = referral_curve(&test, &u, &[0.0, level], Metric::Qwk)?;
    let v: Vec<f64> = curve.points.into_iter().map(|p| p.value).collect::<std::result::Result<_, _>>()?;
    Ok(ReferralOutcome { qwk_full: v[0], qwk_referred: v[1] })
}

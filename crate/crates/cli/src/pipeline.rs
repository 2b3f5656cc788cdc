//! `analyze`: aggregate → uncertainty → referral → bootstrap → report.

use referkit::uncertainty::{GenericLoss, LossTable};
use referkit::{
    aggregate, binarize_rdr, bootstrap, improvement_markers, referral_curve, ClassificationScheme, ConfusionMatrix,
    Metric, PredictionSet, UncertaintySpec,
};
use referkit::referral::display_one_decimal;

use crate::config::{MeasureName, RunConfig, SchemeName};
use crate::error::{CliError, Result};
use crate::formats::{load_confusion, load_predictions, load_stack, write_atomic};
use crate::report::{LevelEntry, Report, REPORT_FORMAT, REPORT_VERSION};

/// Collapses a five-grade confusion matrix to referable / non-referable.
pub fn binarize_confusion(c: &ConfusionMatrix, threshold: usize) -> Result<ConfusionMatrix> {
    let m = c.n_classes();
    let mut counts = vec![0u64; 4];
    for pred in 0..m {
        for truth in 0..m {
            let cell = 2 * usize::from(pred >= threshold) + usize::from(truth >= threshold);
            counts[cell] += c.get(pred, truth);
        }
    }
    Ok(ConfusionMatrix::new(2, counts)?)
}

fn apply_scheme(
    scheme: Option<SchemeName>,
    preds: PredictionSet,
    confusion: Option<ConfusionMatrix>,
) -> Result<(String, PredictionSet, Option<ConfusionMatrix>)> {
    let m = preds.n_classes();
    match scheme {
        None => Ok((format!("generic{m}"), preds, confusion)),
        Some(SchemeName::Pirc5) => {
            if m != 5 {
                return Err(referkit::Error::WrongClassCount { expected: 5, found: m }.into());
            }
            Ok(("pirc5".into(), preds, confusion))
        }
        Some(SchemeName::Rdr2) if m == 2 => Ok(("rdr2".into(), preds, confusion)),
        Some(SchemeName::Rdr2) => {
            let scheme = ClassificationScheme::rdr();
            let binary = binarize_rdr(&preds, &scheme)?;
            let confusion = match confusion {
                Some(c) if c.n_classes() == 5 => Some(binarize_confusion(&c, ClassificationScheme::RDR_THRESHOLD)?),
                other => other,
            };
            Ok(("rdr2".into(), binary, confusion))
        }
    }
}

fn uncertainty_spec(measure: MeasureName, m: usize, confusion: Option<ConfusionMatrix>, smoothing: f64) -> Result<UncertaintySpec> {
    Ok(match measure {
        MeasureName::Entropy => UncertaintySpec::Entropy,
        MeasureName::MaxProb => UncertaintySpec::MaxProbReject,
        MeasureName::NllRisk => UncertaintySpec::GenericRisk(GenericLoss::NegLogLikelihood),
        MeasureName::ZeroOneRisk => UncertaintySpec::GenericRisk(GenericLoss::Table(LossTable::zero_one(m))),
        MeasureName::QwkRisk => UncertaintySpec::QwkRisk {
            validation: confusion
                .ok_or_else(|| CliError::InvalidConfig("measure qwk_risk needs a confusion matrix".into()))?,
            smoothing,
        },
    })
}

fn measure_name(m: MeasureName) -> &'static str {
    match m {
        MeasureName::Entropy => "entropy",
        MeasureName::MaxProb => "max_prob",
        MeasureName::QwkRisk => "qwk_risk",
        MeasureName::NllRisk => "nll_risk",
        MeasureName::ZeroOneRisk => "zero_one_risk",
    }
}

/// Runs the analysis. Paths in `config` are used as given; `echo` is the
/// configuration recorded in the report (normally the unresolved original).
pub fn analyze(config: &RunConfig, echo: &RunConfig) -> Result<Report> {
    config.validate()?;
    let preds = match (&config.predictions, &config.stack) {
        (Some(p), _) => load_predictions(p)?,
        (None, Some(s)) => aggregate(&load_stack(s)?)?,
        (None, None) => unreachable!("validated"),
    };
    let confusion = match &config.confusion {
        Some(path) if config.measure == MeasureName::QwkRisk => Some(load_confusion(path)?),
        _ => None,
    };
    let (scheme, preds, confusion) = apply_scheme(config.scheme, preds, confusion)?;
    let spec = uncertainty_spec(config.measure, preds.n_classes(), confusion, config.smoothing)?;
    let u = spec.compute(&preds)?;
    let metric = Metric::from(config.metric);

    let curve = referral_curve(&preds, &u, &config.levels, metric)?;
    let boot = bootstrap(&preds, &u, &config.levels, metric, config.bootstrap, config.seed)?;
    let markers = improvement_markers(&boot.means())?;

    let levels = curve
        .points
        .iter()
        .zip(&boot.per_level)
        .enumerate()
        .map(|(k, (point, summary))| LevelEntry {
            level: point.level,
            retained_count: point.retained_count,
            point_estimate: point.value.as_ref().ok().copied(),
            mean: summary.mean,
            std: summary.std,
            n_valid: summary.n_valid,
            n_skipped: summary.n_skipped,
            display: summary
                .mean
                .zip(summary.std)
                .map(|(m, s)| format!("{} ± {}", display_one_decimal(m), display_one_decimal(s))),
            marker: k.checked_sub(1).and_then(|j| markers[j]).map(|mk| mk.as_str().to_string()),
        })
        .collect();

    Ok(Report {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        config: echo.clone(),
        scheme,
        measure: measure_name(config.measure).into(),
        metric: metric.name().into(),
        n_examples: preds.n_examples(),
        n_classes: preds.n_classes(),
        n_resamples: config.bootstrap,
        seed: config.seed,
        levels,
    })
}

/// [`analyze`] and write the report plus plot data atomically.
pub fn run(config: &RunConfig, echo: &RunConfig) -> Result<Report> {
    let report = analyze(config, echo)?;
    write_atomic(&config.output, report.to_json().as_bytes())?;
    write_atomic(&config.plot_path(), report.plot_csv().as_bytes())?;
    Ok(report)
}

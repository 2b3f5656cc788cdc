//! Uncertainty-aware evaluation of probabilistic classifiers.
//!
//! The pipeline turns per-draw class probabilities into a posterior
//! predictive ([`data`]), scores each example's uncertainty as an expected
//! conditional risk ([`uncertainty`]), refers the most uncertain fraction
//! ([`referral`]) and reports bootstrap mean ± std of the retained
//! performance ([`resample`]) using kappa or ROC AUC ([`metrics`]).

pub mod data;
pub mod error;
pub mod metrics;
pub mod referral;
pub mod resample;
pub mod uncertainty;

pub use data::{aggregate, binarize_rdr, ClassificationScheme, PredictionSet, SampleStack};
pub use error::{Error, Result};
pub use metrics::{confusion_from, expected_agreement, qwk, roc_auc, ConfusionMatrix};
pub use referral::{improvement_markers, refer, referral_curve, Marker, Metric, ReferralCurve};
pub use resample::{bootstrap, rng_stream, BootstrapReport, RngStream};
pub use uncertainty::{
    entropy, expected_conditional_risk, max_prob_reject, qwk_risk, UncertaintySpec,
    UncertaintyVector,
};

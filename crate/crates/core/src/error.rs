use thiserror::Error;

/// Errors raised by the evaluation toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("sample stack is empty")]
    EmptyStack,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("expected {expected} classes, found {found}")]
    WrongClassCount { expected: usize, found: usize },
    #[error("row {row}: invalid probability vector ({reason})")]
    InvalidProbabilityRow { row: usize, reason: String },
    #[error("label {label} at row {row} is outside [0, {n_classes})")]
    LabelOutOfRange { row: usize, label: usize, n_classes: usize },
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("confusion matrix has zero total count")]
    EmptyMatrix,
    #[error("kappa denominator is zero while the weighted disagreement is positive")]
    DegenerateAgreement,
    #[error("only one label value present; ROC AUC is undefined")]
    SingleClass,
    #[error("uncertainty vector has length {got}, expected {expected}")]
    Misaligned { expected: usize, got: usize },
    #[error("need at least 2 referral levels, got {0}")]
    TooFewLevels(usize),
    #[error("referral level {0} is outside [0, 1)")]
    InvalidLevel(f64),
    #[error("number of bootstrap resamples must be at least 1")]
    InvalidB,
    #[error("input is empty")]
    EmptyInput,
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid uncertainty specification: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, Error>;

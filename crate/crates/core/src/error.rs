use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("atomic ground state is degenerate (gap {gap:.3e})")]
    DegenerateGroundState { gap: f64 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("infrared cutoff {sigma} exceeds ultraviolet cutoff {lambda}")]
    InvalidCutoff { sigma: f64, lambda: f64 },
    #[error("basis needs {required} states, cap is {cap}")]
    CapacityExceeded { required: usize, cap: usize },
    #[error("internal invariant violated: {0}")]
    InternalInvariantViolation(String),
    #[error("matrix is not in the range of the kernel map (residual {residual:.3e})")]
    NotInRange { residual: f64 },
    #[error("Neumann condition failed: {which} = {value:.6}")]
    NeumannConditionFailed { which: &'static str, value: f64 },
    #[error("T is not invertible on Ran chibar (smallest singular value {smallest:.3e})")]
    TNotInvertibleOnRange { smallest: f64 },
    #[error("partition of unity violated (residual {residual:.3e})")]
    PartitionOfUnityViolated { residual: f64 },
    #[error("cutoffs do not commute with T (residual {residual:.3e})")]
    CutoffsDoNotCommute { residual: f64 },
    #[error("H_chibar is singular on Ran chibar (smallest singular value {smallest:.3e})")]
    HChiBarSingular { smallest: f64 },
    #[error("kernel component ({m},{n}) missing")]
    MissingKernelComponent { m: usize, n: usize },
    #[error("series diverges (ratio {ratio:.4})")]
    SeriesDivergence { ratio: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("spectral parameter {z} left the admissible domain")]
    OutOfDomain { z: Complex64 },
    #[error("Feshbach pair invalid at step {step}: {source}")]
    FeshbachPairInvalid { step: usize, source: Box<Error> },
    #[error("contraction lost at step {step} (gamma ratio {ratio:.4})")]
    ContractionLost { step: usize, ratio: f64 },
    #[error("iteration cap {0} reached")]
    MaxIterations(usize),
    #[error("eigenvector residual {residual:.3e} too large")]
    ResidualTooLarge { residual: f64 },
    #[error("projection denominator {value:.3e} below guard")]
    DenominatorTooSmall { value: f64 },
    #[error("contour node {node} is too close to the spectrum (condition {condition:.3e})")]
    ContourHitsSpectrum { node: usize, condition: f64 },
    #[error("contour projection has trace {trace:.6}, expected rank one")]
    RankNotOne { trace: f64 },
    #[error("operator is not Hermitian (residual {residual:.3e})")]
    NonHermitian { residual: f64 },
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable class name, used in CLI error records.
    pub fn class(&self) -> &'static str {
        match self {
            Error::DegenerateGroundState { .. } => "DegenerateGroundState",
            Error::InvalidModel(_) => "InvalidModel",
            Error::InvalidCutoff { .. } => "InvalidCutoff",
            Error::CapacityExceeded { .. } => "CapacityExceeded",
            Error::InternalInvariantViolation(_) => "InternalInvariantViolation",
            Error::NotInRange { .. } => "NotInRange",
            Error::NeumannConditionFailed { .. } => "NeumannConditionFailed",
            Error::TNotInvertibleOnRange { .. } => "TNotInvertibleOnRange",
            Error::PartitionOfUnityViolated { .. } => "PartitionOfUnityViolated",
            Error::CutoffsDoNotCommute { .. } => "CutoffsDoNotCommute",
            Error::HChiBarSingular { .. } => "HChiBarSingular",
            Error::MissingKernelComponent { .. } => "MissingKernelComponent",
            Error::SeriesDivergence { .. } => "SeriesDivergence",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::OutOfDomain { .. } => "OutOfDomain",
            Error::FeshbachPairInvalid { .. } => "FeshbachPairInvalid",
            Error::ContractionLost { .. } => "ContractionLost",
            Error::MaxIterations(_) => "MaxIterations",
            Error::ResidualTooLarge { .. } => "ResidualTooLarge",
            Error::DenominatorTooSmall { .. } => "DenominatorTooSmall",
            Error::ContourHitsSpectrum { .. } => "ContourHitsSpectrum",
            Error::RankNotOne { .. } => "RankNotOne",
            Error::NonHermitian { .. } => "NonHermitian",
            Error::Config(_) => "Config",
        }
    }

    /// The innermost error, looking through `FeshbachPairInvalid` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::FeshbachPairInvalid { source, .. } => source.root(),
            other => other,
        }
    }
}

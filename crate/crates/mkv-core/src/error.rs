use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Failure categories. Each maps onto one machine-readable diagnosis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorKind {
    InvalidMeasure,
    GridMismatch,
    NotProbability,
    MassLoss,
    DomainError,
    Divergent,
    IndexSetError,
    EllipticityError,
    NonIntegrableSingularity,
    SeriesDiverging,
    NoEnvelope,
    Precondition,
    AssumptionViolation,
    MissingDerivative,
    ParticleBlowup,
    CflViolation,
    NonFiniteState,
    UnknownScenario,
    ParamOutOfRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Error {
    pub kind: ErrorKind,
    pub message: String,
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }
}

macro_rules! ctor {
    ($($name:ident => $kind:ident),* $(,)?) => {
        impl Error {
            $(
                pub fn $name(message: impl Into<String>) -> Self {
                    Self::new(ErrorKind::$kind, message)
                }
            )*
        }
    };
}

ctor! {
    invalid_measure => InvalidMeasure,
    grid_mismatch => GridMismatch,
    not_probability => NotProbability,
    mass_loss => MassLoss,
    domain => DomainError,
    divergent => Divergent,
    index_set => IndexSetError,
    ellipticity => EllipticityError,
    non_integrable => NonIntegrableSingularity,
    series_diverging => SeriesDiverging,
    no_envelope => NoEnvelope,
    precondition => Precondition,
    assumption => AssumptionViolation,
    missing_derivative => MissingDerivative,
    particle_blowup => ParticleBlowup,
    cfl => CflViolation,
    non_finite => NonFiniteState,
    unknown_scenario => UnknownScenario,
    param_out_of_range => ParamOutOfRange,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

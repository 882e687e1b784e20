use thiserror::Error;

use crate::model::RegionTag;

/// Coarse failure category, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed input or violated structural invariant.
    Validation,
    /// Parameters outside the regime an operation requires.
    Regime,
    /// Numerical failure or unexpected spectral structure.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("structural invariant violated: {0}")]
    StructuralInvalid(String),

    #[error("cannot load input: {0}")]
    Load(String),

    #[error("regime violation: {0}")]
    Regime(String),

    #[error("state outside the state space: occupancy {occupancy} exceeds capacity {capacity}")]
    OutOfStateSpace { occupancy: f64, capacity: f64 },

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("root count mismatch for {poly}: {detail}")]
    RootCountMismatch { poly: &'static str, detail: String },

    #[error("repeated root detected near {re} + {im}i")]
    RepeatedRootDetected { re: f64, im: f64 },

    #[error("offset walk is not ergodic at this state (region {0:?})")]
    NotErgodic(RegionTag),

    #[error("closed-form moments require the fixed point (distance {0:e})")]
    NotFixedPoint(f64),

    #[error("evaluation point within {distance:e} of a pole")]
    PoleProximity { distance: f64 },

    #[error("integration step too large at t = {t}: component {component} moved by {delta:e}")]
    StepTooLarge { t: f64, component: usize, delta: f64 },

    #[error("fluid dynamics above the threshold are not supported (region {0:?})")]
    RegionUnsupported(RegionTag),

    #[error("stability matrix is singular (|det| = {0:e})")]
    SingularB(f64),

    #[error("observation window is empty")]
    EmptyWindow,

    #[error("path sampling was disabled for this run")]
    TraceDisabled,

    #[error("no feasible threshold: {0}")]
    Infeasible(String),

    #[error("eigenvalue computation did not converge")]
    EigenFailure,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::StructuralInvalid(_)
            | Error::Load(_)
            | Error::OutOfStateSpace { .. }
            | Error::EmptyWindow
            | Error::TraceDisabled => ErrorKind::Validation,
            Error::Regime(_)
            | Error::NotErgodic(_)
            | Error::NotFixedPoint(_)
            | Error::RegionUnsupported(_)
            | Error::Infeasible(_)
            | Error::DegenerateModel(_) => ErrorKind::Regime,
            Error::RootCountMismatch { .. }
            | Error::RepeatedRootDetected { .. }
            | Error::PoleProximity { .. }
            | Error::StepTooLarge { .. }
            | Error::SingularB(_)
            | Error::EigenFailure => ErrorKind::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

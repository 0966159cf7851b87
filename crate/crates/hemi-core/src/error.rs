use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point lies within 1e-10 of the projection pole -e_1")]
    PoleSingularity,
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("invalid field specification: {0}")]
    InvalidField(String),
    #[error("field is not positive: refined minimum {min:.3e}")]
    NonPositiveField { min: f64 },
    #[error("adaptive quadrature for {what} stalled at error {err:.3e} above tolerance {tol:.3e}")]
    ToleranceNotMet { what: String, err: f64, tol: f64 },
    #[error("concentration point lies on the boundary; use the exact bubble")]
    BoundaryPoint,
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("index {0} is not a boundary bubble")]
    IndexNotBoundary(usize),
    #[error("index {0} is not an interior bubble")]
    IndexNotInterior(usize),
    #[error("configuration is not in the W-set: {0}")]
    NotInWSet(String),
    #[error("degenerate critical point at {location:?}: Hessian eigenvalue {eigenvalue:.3e}")]
    DegenerateCriticalPoint { location: Vec<f64>, eigenvalue: f64 },
    #[error("ambiguous sign of the normal derivative {value:.3e} at {location:?}")]
    AmbiguousSign { location: Vec<f64>, value: f64 },
    #[error("level {level} lies inside an energy band")]
    LevelInsideBand { level: f64 },
    #[error("assumption violation: {0}")]
    AssumptionViolation(String),
    #[error("state outside the neighborhood at infinity: {0}")]
    OutsideNeighborhood(String),
    #[error("state could not be classified: {0}")]
    UnclassifiableState(String),
    #[error("integration failed at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

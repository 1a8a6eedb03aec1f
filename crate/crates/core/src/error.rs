use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("wavefunction of level {level} has amplitude {amplitude:.3e} at the grid edge; enlarge the grid half-width")]
    BoundaryLeak { level: usize, amplitude: f64 },

    #[error("doubling the grid moved level {level} by {shift:.3e} (allowed {allowed:.3e})")]
    NotConverged { level: usize, shift: f64, allowed: f64 },

    #[error("potential calibration failed: {0}")]
    CalibrationFailed(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported model kind: {0}")]
    UnsupportedKind(String),

    #[error("closed-form delta requires a two-level truncation (M = 1), got M = {0}")]
    ClosedFormNeedsTwoLevels(usize),

    #[error("eigensolver failure: {0}")]
    SolverFailure(String),

    #[error("vector is not normalized (norm^2 = {0})")]
    NotNormalized(f64),

    #[error("missing context for frame: {0}")]
    MissingContext(String),

    #[error("state lives on a space of dimension {state}, representation has dimension {operator}")]
    SpaceMismatch { state: usize, operator: usize },

    #[error("cutoff ceiling reached without convergence: {0}")]
    CutoffCeiling(String),

    #[error("gap clusters at {first:.6e} and {second:.6e} are within twice the grouping tolerance {tolerance:.1e}")]
    DegenerateGapAmbiguity {
        first: f64,
        second: f64,
        tolerance: f64,
    },

    #[error("integrator failure: {0}")]
    StepFailure(String),

    #[error("steady state is not unique: null space dimension {0}")]
    NonUniqueSteadyState(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

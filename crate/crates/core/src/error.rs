use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The gradient is below the configured floor, so the nondivergence
    /// expansion (or the frozen coefficients) is undefined at this point.
    #[error("gradient {norm:.3e} below floor {floor:.1e} at {point:?}")]
    GradientDegenerate { point: Vec<f64>, norm: f64, floor: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("point {point:?} at distance {distance} is outside the annulus [{inner}, {outer}]")]
    OutOfAnnulus { point: Vec<f64>, distance: f64, inner: f64, outer: f64 },

    #[error("no localized touch: contact at {point:?} lies on the neighborhood boundary")]
    NoTouch { point: Vec<f64> },

    #[error("point {point:?} is not within {tolerance} of the free boundary")]
    NotOnFreeBoundary { point: Vec<f64>, tolerance: f64 },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("ball of radius {radius} at {center:?} leaves the grid")]
    BallOutOfDomain { center: Vec<f64>, radius: f64 },

    #[error("field is negative (min {min:.3e}) where nonnegativity is required")]
    Negativity { min: f64 },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("resolution exhausted: scale {rho:.3e} is below 4h = {limit:.3e}")]
    ResolutionExhausted { rho: f64, limit: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

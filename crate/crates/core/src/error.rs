use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("point outside chart domain: {0}")]
    OutsideChart(String),
    #[error("endpoint within {distance:.3e} of the cut locus (threshold {threshold:.3e})")]
    CutLocus { distance: f64, threshold: f64 },
    #[error("geodesic shooting did not converge after {iterations} iterations (residual {residual:.3e})")]
    ShootingFailed { iterations: usize, residual: f64 },
    #[error("geodesic integration produced a non-finite state")]
    OdeFailure,
    #[error("ambient point at distance {distance:.6} from the manifold lies outside the tube of radius {reach:.6}")]
    OutsideTube { distance: f64, reach: f64 },
    #[error("unsupported grid resolution: {0}")]
    Resolution(String),
    #[error("map is not an isometric immersion at this point (defect {0:.3e})")]
    NotImmersion(f64),
    #[error("map is not a Riemannian submersion at this point (defect {0:.3e})")]
    NotSubmersion(f64),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("weight field must be strictly positive (minimum {0:.3e})")]
    NonPositiveWeight(f64),
    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:.3e})")]
    EigenNonConvergence { iterations: usize, residual: f64 },
    #[error("prior density vanishes at the estimate")]
    VanishingPrior,
    #[error("posterior normaliser underflows (log mass {0:.1})")]
    DenominatorUnderflow(f64),
    #[error("tangent vector of norm {norm:.4} exceeds the series radius {radius:.4}")]
    RadiusViolation { norm: f64, radius: f64 },
    #[error("noise-level design is insufficient: {0}")]
    InsufficientDesign(String),
    #[error("least-squares design matrix is singular")]
    SingularDesign,
    #[error("unsupported codomain: {0}")]
    UnsupportedCodomain(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the walk, evolution, symmetry and photon routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("momentum ({0:.6}, {1:.6}, {2:.6}) lies outside the Brillouin zone")]
    OutsideBrillouin(f64, f64, f64),

    #[error("invalid lattice period {0}: need at least 2")]
    InvalidPeriod(usize),

    #[error("invalid mass {0}: need 0 <= m < 1")]
    InvalidMass(f64),

    #[error("{0} is only defined for {1} walks")]
    UnsupportedKind(&'static str, &'static str),

    #[error("dispersion is not differentiable at omega = {0:.3e} (cone apex)")]
    NonDifferentiable(f64),

    #[error("matrix logarithm is ambiguous: eigenphase {0:.12} is within 1e-9 of pi")]
    BranchAmbiguity(f64),

    #[error("isotropy action is not transitive on the positive generators")]
    NonTransitiveAction,

    #[error("representation has {got} elements but the action has {expected}")]
    RepresentationSize { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("momentum ({0:.6}, {1:.6}, {2:.6}) is not on the quotient grid")]
    Aliasing(f64, f64, f64),

    #[error("invalid wave packet: {0}")]
    InvalidPacket(String),

    #[error("lattice too small: packet tail {tail:.3e} exceeds {bound:.0e}")]
    LatticeTooSmall { tail: f64, bound: f64 },

    #[error("deformed transform left the invertibility domain after {iterations} Newton iterations (residual {residual:.3e})")]
    OutOfDomain { iterations: usize, residual: f64 },

    #[error("orbit is degenerate: the transform fails at the first sample")]
    DegenerateOrbit,

    #[error("invalid Lorentz element: {0}")]
    InvalidLorentz(String),

    #[error("degenerate direction: helicity vector vanishes")]
    DegenerateDirection,

    #[error("momentum mismatch: {0}")]
    MomentumMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigen-decomposition did not converge")]
    NoConvergence,
}

pub type Result<T> = std::result::Result<T, Error>;

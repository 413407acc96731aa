use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("quadratic part is not elliptic: {0}")]
    NonElliptic(String),
    #[error("polynomial degree {degree} too low for normal form order {order}")]
    DegreeTooLow { degree: u32, order: u32 },
    #[error("no fixed point found: {0}")]
    NoFixedPoint(String),
    #[error(
        "non-generic fixed point at ({x}, {p}): Hessian determinant {det:e} is numerically singular \
         (for a pure quartic well the Hessian matrix has rank 1 and the expansion in hbar breaks down)"
    )]
    NonGeneric { x: f64, p: f64, det: f64 },
    #[error("fixed point at ({x}, {p}) is a saddle; no closed orbits surround it")]
    Saddle { x: f64, p: f64 },
    #[error("orbit did not close: {0}")]
    OrbitNotClosed(String),
    #[error("action {action} outside the working window (max {max_action})")]
    OutOfWindow { action: f64, max_action: f64 },
    #[error("map is not symplectic: det = {0}")]
    NotSymplectic(f64),
    #[error("oracle did not converge: {0}")]
    OracleDiverged(String),
    #[error("symbol is unbounded below: {0}")]
    Unbounded(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

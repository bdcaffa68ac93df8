use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("time {t} outside [0, {t_f}]")]
    Domain { t: f64, t_f: f64 },
    #[error("path comes within {distance:.3e} of the exceptional point near t = {t}")]
    Singularity { t: f64, distance: f64 },
    #[error("eigenvalue branch unresolved near t = {t} after {depth} bisection rounds")]
    Refinement { t: f64, depth: usize },
    #[error("step size underflow at t = {t}")]
    Integration { t: f64 },
    #[error("spectral frame was built for a different loop")]
    Consistency,
    #[error("quadrature error {estimate:.3e} exceeds tolerance on panel [{a}, {b}]")]
    Quadrature { a: f64, b: f64, estimate: f64 },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("every singular value is below the cutoff")]
    RankZero,
    #[error("correction order {order} needs {needed} prior orders, got {got}")]
    MissingPrior { order: u32, needed: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid set: {0}")]
    InvalidSet(String),

    #[error(
        "dykstra projection did not converge after {iterations} sweeps (last change {change:e})"
    )]
    DykstraNotConverged { iterations: usize, change: f64 },

    #[error("tangent residual is not available for {0}")]
    UnsupportedSet(&'static str),

    #[error("point lies outside the set (violation {violation:e})")]
    NotInSet { violation: f64 },

    #[error("gamma1 = {gamma1} must lie in (0, 1/rho_f) with rho_f = {rho_f}")]
    ProximalOutOfRange { gamma1: f64, rho_f: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "saddle oracle did not converge after {iterations} iterations (last change {change:e})"
    )]
    OracleNotConverged { iterations: usize, change: f64 },

    #[error("(x, y) is not feasible for C (violation {violation:e})")]
    Infeasible { violation: f64 },

    #[error("iterate became non-finite at iteration {0}")]
    NonFinite(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

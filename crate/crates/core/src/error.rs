use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time parameter must be positive, got {0}")]
    NonPositiveTime(f64),

    #[error("weights sum to {sum}, expected 1 within {tol:e}")]
    WeightSum { sum: f64, tol: f64 },

    #[error("regularized mass {mass} deviates from 1 by more than {tol:e}; raise the eigen cutoff for t = {t}")]
    MassDeviation { mass: f64, t: f64, tol: f64 },

    #[error("problem size {rows}x{cols} exceeds the exact solver cap of {cap} atoms per side; use w1_entropic")]
    SizeCap { rows: usize, cols: usize, cap: usize },

    #[error("sinkhorn did not converge after {iterations} iterations (marginal residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("dual certificate infeasible: {0}")]
    InfeasibleDual(String),

    #[error("energy {0:e} is negative beyond tolerance")]
    NegativeEnergy(f64),

    #[error("1 + laplacian(V) is negative ({min_density}) on the grid; the constrained equilibrium is not supported")]
    NegativeEquilibrium { min_density: f64 },

    #[error("eigen table: {0}")]
    EigenTable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

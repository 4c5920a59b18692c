use thiserror::Error;

/// Errors produced by the balloon pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("ODE singularity at s = {s:.6e} m: R*sigma_m = {value:.3e}")]
    Singularity { s: f64, value: f64 },

    #[error("zero meridional tension: payload and weights are both zero")]
    ZeroTension,

    #[error("shooting did not converge after {iterations} iterations, residual = {residual:?}")]
    ShootingFailed { iterations: usize, residual: [f64; 2] },

    #[error("infeasible lobe at s = {s:.4} m: no bulge angle fits the gore wedge")]
    InfeasibleLobe { s: f64 },

    #[error("tube fold at s = {s:.4} m: r_B * kappa = {value:.4} >= 1")]
    TubeFold { s: f64, value: f64 },

    #[error("degenerate facet {facet}: reference edge matrix is singular")]
    DegenerateFacet { facet: usize },

    #[error("parameter {value:.6} outside sampled range [{lo:.6}, {hi:.6}]")]
    Extrapolation { value: f64, lo: f64, hi: f64 },

    #[error("non-finite energy at facet {facet}")]
    NonFinite { facet: usize },

    #[error("line search failed: {0}")]
    LineSearch(String),

    #[error("pairing error: strip {strip} has an odd facet count {count}")]
    Pairing { strip: usize, count: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error(
        "quadrature order {quad_order} too coarse for basis frequency {max_frequency} \
         (need frequency <= order / 2)"
    )]
    QuadratureTooCoarse { quad_order: usize, max_frequency: usize },

    #[error(
        "degenerate direction: directional norm {dir_norm:e} vanishes while the gradient \
         norm is {grad_norm:e}"
    )]
    DegenerateDirection { dir_norm: f64, grad_norm: f64 },

    #[error("function is identically zero")]
    ZeroField,

    #[error("point lies outside the ball (gauge {gauge} > radius {rho})")]
    OutsideBall { gauge: f64, rho: f64 },

    #[error("excluded point lies inside the search ball (gauge {gauge} <= radius {rho})")]
    PunctureInsideBall { gauge: f64, rho: f64 },

    #[error("could not sample the gauge sphere: {0}")]
    SphereSampling(String),

    #[error("boundary condition fails: min <F(z), z - center> = {min_pairing:e} on the gauge sphere")]
    BoundaryCondition { min_pairing: f64 },

    #[error("solver did not converge: best residual {best_residual:e} after {iterations} iterations")]
    NotConverged {
        best_residual: f64,
        iterations: usize,
        best: Vec<f64>,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

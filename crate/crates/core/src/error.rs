use thiserror::Error;

use crate::solver::Trajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("equation of state is not hyperbolic at log-density {rho_log}: {reason}")]
    NonHyperbolic { rho_log: f64, reason: String },

    #[error("axis {axis} has {cells} cells, too few for a five-point stencil")]
    StencilTooWide { axis: usize, cells: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("need snapshots {needed} around index {center}, trajectory has {available}")]
    InsufficientSnapshots {
        center: usize,
        needed: usize,
        available: usize,
    },

    #[error("requested time {t} is not before the shock time {t_shock}")]
    PastShockTime { t: f64, t_shock: f64 },

    #[error("no shock forms: {0}")]
    NoShock(String),

    #[error("value {value} is outside the range of F ({lower}, {upper})")]
    RangeError { value: f64, lower: f64, upper: f64 },

    #[error("null frame is singular (condition number {condition:.3e})")]
    SingularFrame { condition: f64 },

    #[error("eikonal gradient degenerates: |grad u| = {norm:.3e}")]
    DegenerateGradient { norm: f64 },

    #[error("inverse foliation density is nonpositive: mu = {mu:.3e}")]
    MuNonpositive { mu: f64 },

    #[error("torus frame degenerates: condition number of gamma_AB = {condition:.3e}")]
    DegenerateTorusFrame { condition: f64 },

    #[error("geometric coordinates fold: Jacobian determinant changes sign")]
    CoordinateFold,

    #[error("mu_* never dropped below {threshold} (minimum {min:.4})")]
    NoDecay { threshold: f64, min: f64 },

    #[error("non-finite values at t = {t:.6}, step {step}")]
    BlowupDetected {
        t: f64,
        step: usize,
        last_valid: Box<Trajectory>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

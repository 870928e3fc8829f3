use thiserror::Error;

use crate::quat::Sphere;

#[derive(Debug, Error)]
pub enum Error {
    /// The point lies on (or numerically too close to) a spectral sphere.
    #[error("S-resolvent singular at sphere {sphere}: {detail}")]
    Singular { sphere: Sphere, detail: String },

    #[error("point outside function domain: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("cannot construct domain: {0}")]
    Construction(String),

    #[error("eigenvalue solver failed: {0}")]
    EigenSolver(String),

    #[error("function is not left-and-right splittable (beta deviates from real by {violation:e})")]
    NotSplittable { violation: f64 },

    #[error("calculus routes disagree by {residual:e} (tolerance {tolerance:e})")]
    Inconsistent { residual: f64, tolerance: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

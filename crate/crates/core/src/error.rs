//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Errors produced by model construction, closures and solvers.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A constructor argument violated its domain.
    #[error("{name} must be {requirement}, got {value}")]
    InvalidParameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },

    /// The Papay closure left its validity range.
    #[error("compressibility out of validity range at p = {pressure} Pa (Z = {compressibility})")]
    CompressibilityOutOfRange { pressure: f64, compressibility: f64 },

    /// A pressure that must stay positive did not.
    #[error("non-positive pressure at {location}: {value} Pa")]
    NonPositivePressure { location: String, value: f64 },

    /// Densities in flow conversions must be strictly positive.
    #[error("non-positive density: {value} kg/m^3")]
    NonPositiveDensity { value: f64 },

    /// A friction correlation was evaluated outside its regime.
    #[error("{context}: Reynolds number {reynolds} is {requirement}")]
    FrictionDomain {
        context: &'static str,
        reynolds: f64,
        requirement: &'static str,
    },

    /// An iterative solver ran out of iterations.
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// A linear solve inside a Newton iteration failed.
    #[error("singular Jacobian in {what}")]
    SingularJacobian { what: &'static str },

    /// The network graph violates a structural invariant.
    #[error("invalid topology: {0}")]
    Topology(String),

    /// A node id was referenced but never declared.
    #[error("unknown node id `{0}`")]
    UnknownNode(String),

    /// Adaptive step control shrank the step below representable resolution.
    #[error("step size underflow at t = {time} s (h = {step})")]
    StepSizeUnderflow { time: f64, step: f64 },

    /// A load profile is malformed.
    #[error("invalid profile: {0}")]
    Profile(String),

    /// A scenario is inconsistent or incomplete.
    #[error("scenario error: {0}")]
    Scenario(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

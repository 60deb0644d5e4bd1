//! Error type shared by the whole crate.
//!
//! Variants are grouped by what the caller can do about them: `Domain` and
//! `Spec` mean the inputs never made sense, the numerical variants mean a
//! computation refused to certify its own output, and `Io`/`Config` surface
//! the usual plumbing failures. The CLI maps these onto exit codes, so the
//! split is part of the public contract.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument left the mathematical domain of the callee
    /// (negative time lag, zero frequency, evaluation past a horizon, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A specification object failed validation (non-concave modulus,
    /// non-monotone table, coefficient matrix that is not strictly
    /// hyperbolic, ...).
    #[error("invalid specification: {0}")]
    Spec(String),

    /// A quadrature routine could not reach the requested tolerance.
    #[error(
        "quadrature did not converge: achieved error {achieved:.3e} \
         exceeds requested {requested:.3e} ({context})"
    )]
    Quadrature {
        /// Error estimate actually achieved.
        achieved: f64,
        /// Tolerance that was asked for.
        requested: f64,
        /// What was being integrated.
        context: String,
    },

    /// The adaptive ODE stepper drove the step size below the resolvable
    /// limit before reaching the end of the interval.
    #[error("step size underflow at t = {t_reached:.6e}: {detail}")]
    StepUnderflow {
        /// Time the integration had reached when it gave up.
        t_reached: f64,
        /// What forced the step size down.
        detail: String,
    },

    /// An iterative numerical procedure (root bracket, certificate search)
    /// failed to converge.
    #[error("iteration did not converge: {0}")]
    NonConvergence(String),

    /// A statistical fit refused the data (too few points, degenerate
    /// spread, all-zero samples) or the fitted law contradicts the samples.
    #[error("fit rejected: {0}")]
    Fit(String),

    /// Experiment configuration was syntactically fine but semantically
    /// unusable.
    #[error("configuration error: {0}")]
    Config(String),

    /// Filesystem or serialization failure while reading inputs or emitting
    /// result tables.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Convenience constructor used by bounds-checking code.
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Convenience constructor for specification failures.
    pub fn spec(msg: impl Into<String>) -> Self {
        Error::Spec(msg.into())
    }

    /// Convenience constructor for rejected fits.
    pub fn fit(msg: impl Into<String>) -> Self {
        Error::Fit(msg.into())
    }

    /// Convenience constructor for configuration failures.
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

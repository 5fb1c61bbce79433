//! Crate-wide error type.
//!
//! Every failure carries a stable machine-readable code (used by the CLI on
//! its diagnostics stream) and maps onto one of two process exit classes:
//! validation failures (exit 2) and numerical failures (exit 3).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates a documented invariant (domain, grid, model, ...).
    #[error("invalid parameter: {what}")]
    Invalid { what: String },

    /// Trajectory shape or metadata does not match the supplied physics.
    #[error("grid mismatch: {what}")]
    GridMismatch { what: String },

    /// A Dirichlet field carries a nonzero boundary value beyond tolerance.
    #[error("boundary value {value:e} at node {index} violates the Dirichlet constraint")]
    BoundaryViolation { index: usize, value: f64 },

    /// The solver state left the guard region (or became non-finite).
    #[error("trajectory blew up at step {step} (sup-norm {sup:e})")]
    BlowUp { step: usize, sup: f64 },

    /// The time mesh is too coarse for the requested reaction.
    #[error("mesh guard: N = {n} time steps is too coarse for M = {m} spatial intervals with a superlinear reaction (need N >= M^2, or force)")]
    MeshGuard { m: usize, n: usize },

    /// The observed information underflowed; no estimate can be formed.
    #[error("observed information below 1e-300; estimator is undefined on this path")]
    ZeroInformation,

    /// A localization window contains too little of the grid to estimate on.
    #[error("empty window: {what}")]
    EmptyWindow { what: String },

    /// The spectral estimator is only defined for the identity reaction.
    #[error("reaction '{name}' is not linear; the mode-wise estimator requires f = id")]
    NonlinearReaction { name: String },

    /// Bandwidth selection needs a noise-intensity value above one.
    #[error("noise intensity {phi:e} is too small for bandwidth selection (need phi > 1)")]
    PhiTooSmall { phi: f64 },

    /// Diagnostics need a minimum number of retained runs.
    #[error("diagnostics need at least {need} runs, got {got}")]
    TooFewRuns { got: usize, need: usize },

    /// Rate fitting got unusable input.
    #[error("rate fit: {what}")]
    RateFitInput { what: String },

    /// Too many runs blew up at one diffusivity; the study is aborted.
    #[error("{blowups}/{attempted} runs blew up at nu = {nu} (threshold 10%)")]
    TooManyBlowups { nu: f64, blowups: usize, attempted: usize },

    /// A trajectory file does not start with the expected magic bytes.
    #[error("bad magic {found:?}; not a trajectory file")]
    BadMagic { found: [u8; 4] },

    /// A trajectory file uses a format version this build does not read.
    #[error("unsupported trajectory format version {found}")]
    VersionUnsupported { found: u32 },

    /// A trajectory file ends before its header-declared payload.
    #[error("truncated trajectory file at byte offset {offset}")]
    TruncatedFile { offset: u64 },

    /// A run configuration is malformed; `path` is the JSON path at fault.
    #[error("config {path}: {message}")]
    Config { path: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(what: impl Into<String>) -> Self {
        Error::Invalid { what: what.into() }
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }

    /// Stable machine-readable code for the diagnostics stream.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Invalid { .. } => "E_INVALID",
            Error::GridMismatch { .. } => "E_GRID_MISMATCH",
            Error::BoundaryViolation { .. } => "E_BOUNDARY",
            Error::BlowUp { .. } => "E_BLOWUP",
            Error::MeshGuard { .. } => "E_MESH_GUARD",
            Error::ZeroInformation => "E_ZERO_INFO",
            Error::EmptyWindow { .. } => "E_EMPTY_WINDOW",
            Error::NonlinearReaction { .. } => "E_NONLINEAR_REACTION",
            Error::PhiTooSmall { .. } => "E_PHI_RANGE",
            Error::TooFewRuns { .. } => "E_TOO_FEW_RUNS",
            Error::RateFitInput { .. } => "E_RATE_FIT",
            Error::TooManyBlowups { .. } => "E_BLOWUP_FRACTION",
            Error::BadMagic { .. } => "E_BAD_MAGIC",
            Error::VersionUnsupported { .. } => "E_VERSION",
            Error::TruncatedFile { .. } => "E_TRUNCATED",
            Error::Config { .. } => "E_CONFIG",
            Error::Io(_) => "E_IO",
        }
    }

    /// Process exit code class: 2 for validation failures, 3 for numerical ones.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::BlowUp { .. }
            | Error::ZeroInformation
            | Error::TooManyBlowups { .. } => 3,
            _ => 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_split_validation_from_numerical() {
        assert_eq!(Error::invalid("x").exit_code(), 2);
        assert_eq!(Error::BlowUp { step: 3, sup: 1e7 }.exit_code(), 3);
        assert_eq!(Error::ZeroInformation.exit_code(), 3);
        assert_eq!(Error::TruncatedFile { offset: 12 }.exit_code(), 2);
    }

    #[test]
    fn codes_are_stable_identifiers() {
        assert_eq!(Error::ZeroInformation.code(), "E_ZERO_INFO");
        assert_eq!(Error::BadMagic { found: *b"XXXX" }.code(), "E_BAD_MAGIC");
    }
}

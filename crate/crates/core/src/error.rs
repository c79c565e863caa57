use thiserror::Error;

use crate::evolve::RunRecord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("{what} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),
    #[error("({k}, {p}, {q}) do not form a triangle")]
    NotATriangle { k: f64, p: f64, q: f64 },
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("instability at t = {t}: {reason}")]
    Instability { t: f64, reason: String },
    #[error("clipped energy {clipped:e} exceeds 1e-10 of total {total:e}")]
    NegativeEnergy { clipped: f64, total: f64 },
    #[error("conservation violated: defect {0:e}")]
    ConservationViolated(f64),
    #[error("transfer has no interior sign change")]
    NoSignChange,
    #[error("no stationary state by t = {t}")]
    NotStationary { t: f64, record: Box<RunRecord> },
    #[error("run aborted: {source}")]
    Aborted {
        source: Box<Error>,
        partial: Box<RunRecord>,
    },
    #[error("all sweep runs failed")]
    AllRunsFailed,
    #[error("insufficient span: {0}")]
    InsufficientSpan(String),
    #[error("transient not passed: {0}")]
    TransientNotPassed(String),
    #[error("time step too large for finite differencing: {0}")]
    DtTooLarge(String),
    #[error("empty collapse window")]
    EmptyWindow,
    #[error("duration {duration} shorter than {required} (100 slowest periods)")]
    UnderResolvedDuration { duration: f64, required: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("fit window [{lo}, {hi}] outside spectrum support")]
    WindowOutsideSupport { lo: f64, hi: f64 },
    #[error("non-finite viscosity increment at iteration {0}")]
    KernelDivergence(usize),
    #[error("no fixed point after {0} iterations")]
    NoConvergence(usize),
    #[error("dissipation capture {fraction} not reached at k_max")]
    NotCaptured { fraction: f64 },
    #[error("y = {y} outside channel of half height {h}")]
    OutOfChannel { y: f64, h: f64 },
}

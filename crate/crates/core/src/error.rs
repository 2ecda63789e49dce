use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpistError {
    #[error("gap point requested with a growing normalization ({which}); only psi2 and phi1 are allowed off the real axis in the upper sheet")]
    GapGrowth { which: &'static str },
    #[error("operands live on different grids or spectral points")]
    MismatchedGrids,
    #[error("no zero of a(lambda) on the gap: min |a| = {min_abs:.3e} >= {tol:.1e}")]
    NoZeroFound { min_abs: f64, tol: f64 },
    #[error("norming constant components disagree: {first} vs {second}")]
    InconsistentNormingConstant { first: String, second: String },
    #[error("a'(lambda0) by difference ({fd}) and by integral ({integral}) differ by {rel:.3e} relative")]
    DerivativeMismatch { fd: String, integral: String, rel: f64 },
    #[error("mu0 = b0/(nu0 a') has imaginary part {imag:.3e} above {tol:.1e}")]
    NonRealMu0 { imag: f64, tol: f64 },
    #[error("Marchenko kernel imaginary leak {max_imag:.3e} exceeds {tol:.1e}")]
    ImaginaryLeak { max_imag: f64, tol: f64 },
    #[error("finite-rank denominator vanishes at x = {x}")]
    PoleHit { x: f64 },
    #[error("Marchenko system at x = {x} has condition estimate {cond:.3e} > {limit:.1e}")]
    IllConditioned { x: f64, cond: f64, limit: f64 },
    #[error("Marchenko residual at x = {x} is {residual:.3e} > {tol:.1e}")]
    ResidualTooLarge { x: f64, residual: f64, tol: f64 },
    #[error("time step {dt:.3e} exceeds the stability bound {bound:.3e}")]
    CflViolation { dt: f64, bound: f64 },
    #[error("boundary contamination {deviation:.3e} at t = {t} (limit {tol:.1e})")]
    BoundaryContamination { t: f64, deviation: f64, tol: f64 },
    #[error("perturbation normalization failed: weighted sup {value:.6e} for derivative order {order}")]
    NormalizationFailed { order: usize, value: f64 },
    #[error("singular linear system")]
    Singular,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for GpistError {
    fn from(e: std::io::Error) -> Self {
        GpistError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for GpistError {
    fn from(e: serde_json::Error) -> Self {
        GpistError::Io(e.to_string())
    }
}

/// Pipeline stage a failure is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Perturbation,
    Forward,
    Discrete,
    Evolution,
    Kernels,
    Marchenko,
    Reconstruction,
    Pde,
    Diagnostics,
    Io,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Perturbation => "perturbation",
            Stage::Forward => "forward",
            Stage::Discrete => "discrete",
            Stage::Evolution => "evolution",
            Stage::Kernels => "kernels",
            Stage::Marchenko => "marchenko",
            Stage::Reconstruction => "reconstruction",
            Stage::Pde => "pde",
            Stage::Diagnostics => "diagnostics",
            Stage::Io => "io",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("[{stage}] {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: GpistError,
}

pub trait WithStage<T> {
    fn stage(self, stage: Stage) -> Result<T, StageError>;
}

impl<T> WithStage<T> for Result<T, GpistError> {
    fn stage(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

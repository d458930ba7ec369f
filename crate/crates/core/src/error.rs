use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { name: String, pos: usize },

    #[error("exponent at position {pos} is not a non-negative integer")]
    NonIntegerExponent { pos: usize },

    #[error("domain error in `{node}` at x = {x}")]
    Domain { node: String, x: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solution overflowed near t = {t}")]
    Overflow { t: f64 },

    #[error("m = {m} is not in sigma")]
    NotInSigma { m: u32 },

    #[error("no admissible critical abscissa for m = {m}")]
    NoAbscissa { m: u32 },

    #[error("no sign bracket: last residuals {lo} and {hi}")]
    NoBracket { lo: f64, hi: f64 },

    #[error("directional derivative {value} is numerically zero")]
    ZeroDerivative { value: f64 },

    #[error("residual {residual} lies outside the corrector basin")]
    OutsideBasin { residual: f64 },

    #[error("target {target} for f' leaves the monotone branch (node t = {t})")]
    BranchRange { target: f64, t: f64 },

    #[error("f'' vanishes on the branch near x = {x} (fold of f')")]
    BranchFold { x: f64 },

    #[error("solder offset {h} exceeds admissible bound {eps}")]
    SolderOffset { h: f64, eps: f64 },

    #[error("solder window [{t0}, {t1}] is not admissible: {reason}")]
    SolderWindow { t0: f64, t1: f64, reason: String },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("stage {stage} aborted at sample {sample}: {reason}")]
    StageAbort {
        stage: usize,
        sample: usize,
        reason: String,
    },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

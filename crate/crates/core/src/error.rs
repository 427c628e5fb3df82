use thiserror::Error;

/// Errors raised while defining or evaluating a control problem.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProblemError {
    #[error("{what}[{index}] = {value} violates bound {bound} ({side})")]
    Domain {
        what: &'static str,
        index: usize,
        value: f64,
        bound: f64,
        side: &'static str,
    },
    #[error("{what}: expected dimension {expected}, got {actual}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },
    #[error("box {what} is not compact: {detail}")]
    NonCompactBox { what: String, detail: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BasisError {
    #[error("basis size {size} exceeds cap {cap}")]
    Size { size: usize, cap: usize },
    #[error("basis index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("degree must be at least 1")]
    ZeroDegree,
    #[error("basis gradients are numerically dependent (smallest singular value {0:e})")]
    Dependent(f64),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LpError {
    #[error("restricted LP infeasible: phase-1 residual {residual:e}, worst moment row {row}")]
    Infeasible { residual: f64, row: usize },
    #[error("restricted LP needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("grid of {size} columns exceeds cap {cap}")]
    GridTooLarge { size: usize, cap: usize },
    #[error("internal simplex failure: {0}")]
    Internal(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ControlError {
    #[error("closed-form feedback unavailable: {0}")]
    Configuration(String),
    #[error("certificate does not match problem: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error("state left Y at t = {time}: {detail}")]
    StateLeftY { time: f64, detail: String },
    #[error("step size underflow at t = {time} (h = {step:e})")]
    StepFailure { time: f64, step: f64 },
    #[error("no limit cycle found; closest recurrence {closest:e} after {crossings} section crossings")]
    NoLimitCycle { closest: f64, crossings: usize },
    #[error("trajectory converges to an equilibrium (|f| = {speed:e})")]
    EquilibriumDetected { speed: f64 },
    #[error("trajectory too short: {0}")]
    TooShort(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

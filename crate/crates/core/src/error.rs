use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// The absorption term is in the wrong regime for the requested construction.
    #[error("regime precondition violated: {0}")]
    Regime(String),
    #[error("flow does not exist: {0}")]
    FlowDoesNotExist(String),
    #[error("integral diverges at zero: {0}")]
    DivergenceAtZero(String),
    #[error("no convergence after {iterations} iterations: {message}")]
    NonConvergence {
        iterations: usize,
        message: String,
        last_iterates: Option<(Vec<f64>, Vec<f64>)>,
    },
    #[error("time step underflow at t = {t:e} (dt = {dt:e}); refine the grid")]
    DtUnderflow { t: f64, dt: f64 },
    #[error("profile blows up at r = {radius:e} before r_max; use solve_ball_blowup")]
    BlowupBeforeRmax { radius: f64 },
    #[error("inconsistent results: {0}")]
    Inconsistent(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("postcondition violated: {0}")]
    Postcondition(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

use thiserror::Error;

/// Failures raised by the model, solvers and fitting routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {detail}")]
    InvalidParam { name: &'static str, detail: String },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("matrix is not unitary (max deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("square root branch is ambiguous: eigenvalue {0} lies on the -1 branch cut")]
    BranchAmbiguity(String),

    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("no resonance found: {0}")]
    NoResonanceFound(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("every grid point failed; first error: {0}")]
    AllPointsFailed(Box<Error>),
}

pub type Result<T> = std::result::Result<T, Error>;

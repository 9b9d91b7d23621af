use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid model or experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A mapping or cycle type is structurally invalid.
    #[error("structural error: {0}")]
    Structural(String),

    /// A cycle index exceeds the maximal cycle length of the model.
    #[error("constraint error: {0}")]
    Constraint(String),

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("size guard: {0}")]
    SizeGuard(String),

    #[error("no real roots: {0}")]
    NoRealRoots(String),

    /// The model is outside the asymptotic regime an operation assumes.
    #[error("regime error: {0}")]
    Regime(String),

    /// A root finder or other numerical routine failed.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Constraint(_) | Error::SizeGuard(_) | Error::Domain(_) => 2,
            Error::Regime(_) => 4,
            Error::Structural(_)
            | Error::DegenerateWeights(_)
            | Error::NoRealRoots(_)
            | Error::Numerical(_) => 3,
        }
    }
}

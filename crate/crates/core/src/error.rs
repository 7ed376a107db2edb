use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid contour model: {0}")]
    InvalidModel(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("no contour sample is visible from the base station")]
    NoVisibleContour,
    #[error("a_k^H R_x a_k is numerically zero for subsection {k}")]
    DegenerateBeampattern { k: usize },
    #[error("path-loss information i_g is not positive")]
    SingularPathLossInfo,
    #[error("effective FIM is singular (condition {cond:.3e})")]
    SingularEfim { cond: f64 },
    #[error("problem is infeasible (certificate margin {margin:.3e}, relative violation {violation:.3e})")]
    Infeasible { margin: f64, violation: f64 },
    #[error("problem is unbounded")]
    Unbounded,
    #[error("solver failed after {iterations} iterations (primal {primal:.2e}, dual {dual:.2e}, gap {gap:.2e})")]
    SolverFailure {
        iterations: usize,
        primal: f64,
        dual: f64,
        gap: f64,
    },
    #[error("every one of {epochs} randomization epochs was rejected")]
    ExtractionFailed { epochs: usize },
    #[error("delay of subsection {k} is {delay} samples but only {num_samples} are simulated")]
    DelayOverflow {
        k: usize,
        delay: usize,
        num_samples: usize,
    },
    #[error("bad input: {0}")]
    BadInput(String),
    #[error(transparent)]
    Conic(#[from] isac_conic::ConicError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 2 infeasible, 3 numerical failure, 4 bad input.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible { .. } | Error::ExtractionFailed { .. } => 2,
            Error::DegenerateBeampattern { .. }
            | Error::SingularPathLossInfo
            | Error::SingularEfim { .. }
            | Error::Unbounded
            | Error::SolverFailure { .. }
            | Error::NoVisibleContour => 3,
            Error::InvalidModel(_)
            | Error::InvalidPose(_)
            | Error::DelayOverflow { .. }
            | Error::BadInput(_)
            | Error::Conic(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

use crate::design_space::ConstraintReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no feasible sample after {attempts} attempts")]
    Exhausted { attempts: u64 },

    #[error("problem too large for the trace oracle: {macs} MACs exceeds {limit}")]
    Size { macs: u64, limit: u64 },

    #[error("infeasible point: {} violation(s)", .0.violations.len())]
    Infeasible(ConstraintReport),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}

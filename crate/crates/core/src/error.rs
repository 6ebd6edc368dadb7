use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input: malformed config, wrong dimensions, violated preconditions.
    Validation,
    /// A numerical routine could not produce a trustworthy value.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric: entry ({row}, {col}) differs from its transpose")]
    NotSymmetric { row: usize, col: usize },

    #[error("matrix is not positive definite: pivot {pivot} is {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("incomplete gamma shape must be positive, got {0}")]
    NonpositiveShape(f64),

    #[error(
        "radial profile is not integrable: requires alpha > d_y/p, got alpha = {alpha}, d_y = {d_y}, p = {p}"
    )]
    NonIntegrableProfile { alpha: f64, d_y: usize, p: u32 },

    #[error("quadrature did not converge on {what}: estimate {value:e}, error {abs_err:e}")]
    QuadratureNonConvergent {
        what: &'static str,
        value: f64,
        abs_err: f64,
    },

    #[error("bound {what} overflows f64: log value {log_value}")]
    BoundOverflow { what: &'static str, log_value: f64 },

    #[error("all importance weights degenerate (max raw log-weight {max_log_weight}){}", context_suffix(.context))]
    DegenerateWeights {
        max_log_weight: f64,
        context: Option<String>,
    },

    #[error("evidence is undefined for a likelihood carrying log-offset {offset}")]
    OffsetEvidence { offset: f64 },

    #[error("tolerance and scale inputs must be strictly positive: {0}")]
    NonpositiveTolerance(&'static str),

    #[error("log-log fit is degenerate: {0}")]
    DegenerateFit(&'static str),

    #[error("measured error {error:e} is within 5x of the oracle standard error {oracle_se:e}")]
    OracleDominated { error: f64, oracle_se: f64 },

    #[error("no exact reference available for {0}")]
    NoReference(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o failure: {0}")]
    Io(String),
}

fn context_suffix(ctx: &Option<String>) -> String {
    match ctx {
        Some(c) => format!(" at {c}"),
        None => String::new(),
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NotSymmetric { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::DimensionMismatch { .. }
            | Error::NonpositiveShape(_)
            | Error::NonIntegrableProfile { .. }
            | Error::OffsetEvidence { .. }
            | Error::NonpositiveTolerance(_)
            | Error::NoReference(_)
            | Error::InvalidConfig(_)
            | Error::Io(_) => ErrorClass::Validation,
            Error::QuadratureNonConvergent { .. }
            | Error::BoundOverflow { .. }
            | Error::DegenerateWeights { .. }
            | Error::DegenerateFit(_)
            | Error::OracleDominated { .. } => ErrorClass::Numerical,
        }
    }

    /// Short stable identifier, suitable for machine-parsable diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotSymmetric { .. } => "NotSymmetric",
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NonpositiveShape(_) => "NonpositiveShape",
            Error::NonIntegrableProfile { .. } => "NonIntegrableProfile",
            Error::QuadratureNonConvergent { .. } => "QuadratureNonConvergent",
            Error::BoundOverflow { .. } => "BoundOverflow",
            Error::DegenerateWeights { .. } => "DegenerateWeights",
            Error::OffsetEvidence { .. } => "OffsetEvidence",
            Error::NonpositiveTolerance(_) => "NonpositiveTolerance",
            Error::DegenerateFit(_) => "DegenerateFit",
            Error::OracleDominated { .. } => "OracleDominated",
            Error::NoReference(_) => "NoReference",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Io(_) => "Io",
        }
    }

    pub(crate) fn with_context(self, ctx: impl Into<String>) -> Self {
        match self {
            Error::DegenerateWeights { max_log_weight, .. } => Error::DegenerateWeights {
                max_log_weight,
                context: Some(ctx.into()),
            },
            other => other,
        }
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}

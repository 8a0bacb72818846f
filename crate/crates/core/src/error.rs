use std::fmt;

use thiserror::Error;

/// Module a failure originated in. Carried into the CLI's error JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    MarketModel,
    PathEngine,
    FundDynamics,
    WealthDynamics,
    Policies,
    Welfare,
    ClosedForm,
    HjbChecker,
    Optimizer,
    ExperimentCli,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Origin::MarketModel => "market_model",
            Origin::PathEngine => "path_engine",
            Origin::FundDynamics => "fund_dynamics",
            Origin::WealthDynamics => "wealth_dynamics",
            Origin::Policies => "policies",
            Origin::Welfare => "welfare",
            Origin::ClosedForm => "closed_form",
            Origin::HjbChecker => "hjb_checker",
            Origin::Optimizer => "optimizer",
            Origin::ExperimentCli => "experiment_cli",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// An input is outside the model's domain. `field` names the offender.
    #[error("domain error in `{field}`: {message}")]
    Domain {
        field: String,
        message: String,
        origin: Origin,
    },

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// An explicit scheme left the positive orthant.
    #[error("unstable step at path {path}, step {step}: {message}")]
    Stability {
        path: usize,
        step: usize,
        message: String,
        origin: Origin,
    },

    #[error("policy evaluation failed: {0}")]
    Evaluation(String),

    #[error("numerical failure: {message}")]
    Numerical { message: String, origin: Origin },

    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(origin: Origin, field: &str, message: impl Into<String>) -> Self {
        Error::Domain {
            field: field.to_string(),
            message: message.into(),
            origin,
        }
    }

    pub(crate) fn numerical(origin: Origin, message: impl Into<String>) -> Self {
        Error::Numerical {
            message: message.into(),
            origin,
        }
    }

    pub(crate) fn parse(line: Option<usize>, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Short machine-readable kind tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "domain",
            Error::Resource(_) => "resource",
            Error::Stability { .. } => "stability",
            Error::Evaluation(_) => "evaluation",
            Error::Numerical { .. } => "numerical",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }

    pub fn origin(&self) -> Origin {
        match self {
            Error::Domain { origin, .. }
            | Error::Stability { origin, .. }
            | Error::Numerical { origin, .. } => *origin,
            Error::Resource(_) => Origin::PathEngine,
            Error::Evaluation(_) => Origin::Policies,
            Error::Parse { .. } | Error::Io(_) => Origin::ExperimentCli,
        }
    }

    /// The offending field for domain errors.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::Domain { field, .. } => Some(field),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

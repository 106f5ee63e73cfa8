use std::fmt;

/// Harness failures, split by the exit code they map to.
#[derive(Debug)]
pub enum HarnessError {
    /// Bad arguments or configuration (exit code 1).
    Usage(String),
    /// Failure while running (exit code 2).
    Runtime(anyhow::Error),
}

impl HarnessError {
    pub fn usage(msg: impl Into<String>) -> Self {
        HarnessError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => 1,
            HarnessError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Usage(msg) => write!(f, "usage error: {msg}"),
            HarnessError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for HarnessError {}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for HarnessError {
            fn from(e: $t) -> Self {
                HarnessError::Runtime(e.into())
            }
        }
    )*};
}

runtime_from!(
    std::io::Error,
    csv::Error,
    serde_json::Error,
    anyhow::Error,
    rl_driver::DriverError,
    continuation::ContinuationError,
    voi_core::VoiError,
    mdp_env::MdpError
);

pub type Result<T> = std::result::Result<T, HarnessError>;

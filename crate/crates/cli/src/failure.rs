use std::fmt;

use roigrasp::dataset_io::DatasetError;
use roigrasp::depth_grasp::DepthError;
use roigrasp::metrics::MetricsError;

/// Exit code for malformed or inconsistent input.
pub const EXIT_INPUT: u8 = 2;
/// Exit code for well-formed input the algorithms cannot handle.
pub const EXIT_DOMAIN: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Library errors often repeat their source in their own message.
        let mut text = String::new();
        for cause in self.error.chain() {
            let msg = cause.to_string();
            if !text.contains(&msg) {
                if !text.is_empty() {
                    text.push_str(": ");
                }
                text.push_str(&msg);
            }
        }
        f.write_str(&text)
    }
}

impl Failure {
    pub fn input(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_INPUT,
            error: error.into(),
        }
    }

    pub fn domain(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_DOMAIN,
            error: error.into(),
        }
    }

    pub fn context(self, msg: impl fmt::Display + Send + Sync + 'static) -> Self {
        Self {
            code: self.code,
            error: self.error.context(msg),
        }
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        Failure::input(e)
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::NoGroundTruth | MetricsError::EmptyCurve | MetricsError::UnknownCategory(_) => {
                Failure::domain(e)
            }
            _ => Failure::input(e),
        }
    }
}

impl From<DepthError> for Failure {
    fn from(e: DepthError) -> Self {
        match e {
            DepthError::NoValidDepth | DepthError::DegenerateNeighborhood(_) => Failure::domain(e),
            _ => Failure::input(e),
        }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

/// Tags any error as an input failure.
pub trait InputContext<T> {
    fn input(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> InputContext<T> for Result<T, E> {
    fn input(self) -> CmdResult<T> {
        self.map_err(Failure::input)
    }
}

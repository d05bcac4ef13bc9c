use std::fmt;

/// Failure of one CLI stage, classified for the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub stage: String,
    pub message: String,
    pub input: bool,
}

impl CliError {
    pub fn input(stage: &str, message: impl Into<String>) -> Self {
        Self {
            stage: stage.into(),
            message: message.into(),
            input: true,
        }
    }

    pub fn compute(stage: &str, message: impl Into<String>) -> Self {
        Self {
            stage: stage.into(),
            message: message.into(),
            input: false,
        }
    }

    /// 2 for bad input or usage, 1 for failures during computation.
    pub fn exit_code(&self) -> i32 {
        if self.input {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed: {}", self.stage, self.message)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches a stage name to library errors.
pub trait Stage<T> {
    fn stage(self, stage: &str) -> CliResult<T>;
}

impl<T> Stage<T> for brainscore::Result<T> {
    fn stage(self, stage: &str) -> CliResult<T> {
        self.map_err(|e| CliError {
            stage: stage.into(),
            input: e.is_input_error(),
            message: e.to_string(),
        })
    }
}

impl<T> Stage<T> for std::io::Result<T> {
    fn stage(self, stage: &str) -> CliResult<T> {
        self.map_err(|e| CliError::input(stage, e.to_string()))
    }
}

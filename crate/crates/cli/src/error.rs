use std::fmt;

use rsim::analysis::AnalysisError;
use rsim::checkpoint::CheckpointError;
use rsim::env::EnvError;
use rsim::marl::MarlError;
use rsim::model::ModelError;
use rsim::ConfigError;

/// Machine-parsable failure class, printed as the first field of the error line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    ConfigError,
    CorruptCheckpoint,
    VocabMismatch,
    NumericError,
    IoError,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn new(category: Category, message: impl Into<String>) -> CliError {
        CliError { category, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> CliError {
        CliError::new(Category::ConfigError, message)
    }

    pub fn io(context: impl fmt::Display, e: impl fmt::Display) -> CliError {
        CliError::new(Category::IoError, format!("{context}: {e}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.category, self.message.replace('\n', " "))
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::config(e.0)
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        CliError::config(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let category = match e {
            ModelError::NonFiniteLogits | ModelError::NonFiniteGradient | ModelError::NonFiniteParameter => {
                Category::NumericError
            }
            _ => Category::ConfigError,
        };
        CliError::new(category, e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Corrupt(m) => CliError::new(Category::CorruptCheckpoint, m),
            CheckpointError::VocabMismatch(m) => CliError::new(Category::VocabMismatch, m),
            CheckpointError::Io(m) => CliError::new(Category::IoError, m),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::ParseError(..) => CliError::config(e.to_string()),
            AnalysisError::Io(m) => CliError::new(Category::IoError, m),
        }
    }
}

impl From<MarlError> for CliError {
    fn from(e: MarlError) -> Self {
        match e {
            MarlError::VocabMismatch(m) => CliError::new(Category::VocabMismatch, m),
            MarlError::Model(m) => m.into(),
            MarlError::Config(c) => c.into(),
            MarlError::Env(v) => v.into(),
            MarlError::Observer(m) => CliError::new(Category::IoError, m),
            MarlError::GroupTooSmall(_) | MarlError::EmptyEvalSet => CliError::config(e.to_string()),
            MarlError::NonFiniteLoss(_) | MarlError::StaleRollout(_) => CliError::new(Category::NumericError, e.to_string()),
        }
    }
}

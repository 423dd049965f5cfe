use std::fmt;

use crate::config::Issue;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration:\n{}", list(.0))]
    Invalid(Vec<Issue>),
    #[error("{0}")]
    Core(#[from] smallball::Error),
    #[error("input does not match the expected schema: {0}")]
    Schema(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn list(issues: &[Issue]) -> String {
    struct Lines<'a>(&'a [Issue]);
    impl fmt::Display for Lines<'_> {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            for (i, issue) in self.0.iter().enumerate() {
                if i > 0 {
                    writeln!(f)?;
                }
                write!(f, "  {issue}")?;
            }
            Ok(())
        }
    }
    Lines(issues).to_string()
}

impl CliError {
    pub fn invalid(path: &str, message: impl Into<String>) -> Self {
        CliError::Invalid(vec![Issue {
            path: path.into(),
            message: message.into(),
        }])
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// 3 for numerical failures, 2 for everything a user can fix in the input.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(smallball::Error::Fit(_)) => 3,
            _ => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

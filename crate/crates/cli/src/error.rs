use std::fmt;

/// A failure with the exit code it maps to: 2 for usage, 1 for the pipeline.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: msg.into(),
        }
    }

    /// Pipeline error tagged with the stage it came from.
    pub fn stage(stage: &str, err: impl fmt::Display) -> Self {
        Self {
            code: 1,
            message: format!("{stage}: {err}"),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

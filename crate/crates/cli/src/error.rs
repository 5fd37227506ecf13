use std::fmt;

/// Exit status classes. Clap's own usage errors also exit with 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Usage = 2,
    Input = 3,
    Backend = 4,
    Internal = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub class: Class,
    pub error: anyhow::Error,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn fail<T>(class: Class, msg: impl fmt::Display) -> CliResult<T> {
    Err(CliError { class, error: anyhow::anyhow!("{msg}") })
}

pub trait ClassExt<T> {
    fn class(self, class: Class) -> CliResult<T>;
    fn class_ctx(self, class: Class, ctx: impl fmt::Display + Send + Sync + 'static) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> ClassExt<T> for Result<T, E> {
    fn class(self, class: Class) -> CliResult<T> {
        self.map_err(|e| CliError { class, error: e.into() })
    }

    fn class_ctx(self, class: Class, ctx: impl fmt::Display + Send + Sync + 'static) -> CliResult<T> {
        self.map_err(|e| CliError { class, error: e.into().context(ctx) })
    }
}

use std::fmt;

/// A command failure and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad input data or files: exit 2.
    Data(anyhow::Error),
    /// A broken internal invariant: exit 3.
    Internal(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Data(_) => "data",
            Failure::Internal(_) => "internal",
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Data(e) | Failure::Internal(e) => e,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error())
    }
}

pub fn data(msg: impl fmt::Display) -> Failure {
    Failure::Data(anyhow::anyhow!("{msg}"))
}

pub trait Classify<T> {
    fn data(self) -> Result<T, Failure>;
    fn internal(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn data(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(e.into()))
    }

    fn internal(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Internal(e.into()))
    }
}
